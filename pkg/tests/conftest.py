import pytest

from tractflow import synthetic
from tractflow.encoder import GatConfig
from tractflow.gbrt import BoostConfig
from tractflow.model import train_model
from tractflow.training import TrainConfig

SMALL_WORLD = synthetic.WorldConfig(n_tracts=40, box_km=8.0, neighbors=5,
                                    gravity_constant=0.3)


@pytest.fixture(scope="session")
def small_world():
    return synthetic.gravity_world(seed=7, config=SMALL_WORLD)


@pytest.fixture(scope="session")
def small_model(small_world):
    graph, flows, schema = small_world
    return train_model(
        graph, flows, schema,
        GatConfig(layers=2, hidden_dim=8, embedding_dim=8),
        TrainConfig(epochs=10, batch_size=256, lr=0.005, optimizer="adam",
                    log_targets=True, seed=0),
        BoostConfig(rounds=100))
