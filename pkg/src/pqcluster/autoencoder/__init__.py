"""1-D convolutional autoencoder with hand-written backpropagation."""
from pqcluster.autoencoder.layers import Conv1D, Dense, Flatten, MaxPool2, ReLU, Reshape, Upsample
from pqcluster.autoencoder.network import (
    ArchConfig, Autoencoder, DecoderNet, EncoderNet, mse_grad, mse_loss, per_record_loss,
)
from pqcluster.autoencoder.training import (
    Adam, TrainConfig, TrainResult, encode_dataset, evaluate, load_model, save_model, train,
)

__all__ = [
    "Adam", "ArchConfig", "Autoencoder", "Conv1D", "DecoderNet", "Dense", "EncoderNet",
    "Flatten", "MaxPool2", "ReLU", "Reshape", "TrainConfig", "TrainResult", "Upsample",
    "encode_dataset", "evaluate", "load_model", "mse_grad", "mse_loss", "per_record_loss",
    "save_model", "train",
]
