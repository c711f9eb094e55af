import pytest

from gpnqap.training import TrainConfig, train

# desk-scale QAP run shared by the training-curve regression and the learning-signal criterion
DESK_CFG = TrainConfig(epochs=2, steps_per_epoch=200, batch_size=64, train_n=12, seed=0)


@pytest.fixture(scope="session")
def desk_run():
    return train("two_stage_qap", DESK_CFG)
