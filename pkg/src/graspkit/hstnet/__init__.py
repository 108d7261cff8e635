from .config import ConfigError, NetworkConfig, PRESETS, full_config, miniature_config
from .gradcheck import check_gradients
from .grouping import ball_query, build_groups, window_groups
from .model import HSTNet, loss_recons, sinusoidal_encoding
from .train import (TrainHyper, TrainResult, TrainingError, WindowSample, first_nonfinite_layer, load_checkpoint,
                    make_sample, predict, refine_sequence, refine_window, save_checkpoint, train)
