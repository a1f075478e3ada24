from .checkpoint import load_checkpoint, save_checkpoint
from .losses import EPS, d_loss, g_loss
from .models import (
    Discriminator,
    Generator,
    build_models,
    init_weights,
    layer_table,
    parameter_count,
)
from .train import LossHistory, TrainConfig, discriminator_accuracy, generate, train, train_tensors
