"""
The model API

This module provides the classifiers and the machinery to train, persist
and reload them.  A DBN and an MLP baseline are provided by default but more
models and optimisers can be added by users.
"""

# ruff: noqa: F401
from dbnids.models._bundle import BUNDLE_VERSION, ModelBundle
from dbnids.models._dbn import (
    DEFAULT_LAYER_SIZES,
    DbnArchitecture,
    DbnModel,
    fine_tune,
    forward,
    greedy_pretrain,
    predict,
)
from dbnids.models._mlp import DEFAULT_HIDDEN_SIZES, MlpModel, mlp_predict, mlp_train
from dbnids.models._model import MODEL_FOR_KIND, Classifier
from dbnids.models._network import DenseLayer, FeedForwardNetwork
from dbnids.models._optim import OPTIMISER_FOR_NAME, Adam, Optimiser, Sgd
from dbnids.models._training import (
    EpochRecord,
    FineTuneConfig,
    MlpTrainConfig,
    TrainConfig,
    train_network,
)

# Register supported model kinds and the Classifiers implementing them
MODEL_FOR_KIND.update(
    {
        DbnModel.KIND: DbnModel,
        MlpModel.KIND: MlpModel,
    }
)

# Register supported optimisers
OPTIMISER_FOR_NAME.update(
    {
        Adam.NAME: Adam,
        Sgd.NAME: Sgd,
    }
)
