from .layers import (ACTIVATIONS, DeepSplit, Dense, Layer, ReZero, Sequential, SoftQuant,
                     deep_split_widths, soft_quant, split_sizes)
from .model import CheckpointError, Network, NetworkSpec, read_checkpoint, write_checkpoint
from .train import (GradReport, Optimizer, TrainConfig, TrainingDiverged, TrainResult,
                    check_gradients, finetune_decoder, grad_check, mse_loss, network_grad_check,
                    train)
