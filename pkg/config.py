"""
Configuration module for RewriteNet
Loads settings from environment variables
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Config:
    """Base configuration class"""

    # Run artifacts
    RUN_ROOT = os.getenv('REWRITENET_RUN_ROOT', 'runs')
    DATA_ROOT = os.getenv('REWRITENET_DATA_ROOT', 'data')

    # Logging configuration
    LOG_FILE = os.getenv('REWRITENET_LOG_FILE', 'logs/rewritenet.log')
    LOG_LEVEL = os.getenv('REWRITENET_LOG_LEVEL', 'INFO')

    # Model defaults
    EMBEDDING_DIM = int(os.getenv('REWRITENET_EMBEDDING_DIM', 64))
    LAYERS = 4
    RULES = 32
    TEMPERATURE = 1.0
    SINKHORN_ITERS = 10
    DROPOUT = 0.2

    # Optimisation defaults
    TRAIN_STEPS = int(os.getenv('REWRITENET_TRAIN_STEPS', 20000))
    BATCH_SIZE = 64
    LEARNING_RATE = 1e-4
    GRAD_CLIP = 1.0
    EVAL_BATCH_SIZE = int(os.getenv('REWRITENET_EVAL_BATCH_SIZE', 256))

    # Размеры выборок / dataset sizes per split
    SPLIT_SIZES = {
        'train': 10000,
        'valid': 1000,
        'test': 1000,
    }


class DeskScaleConfig(Config):
    """CPU-friendly defaults used unless a run asks for more"""
    pass


class PaperScaleConfig(Config):
    """Full-size setting: wider embeddings and a longer schedule"""
    EMBEDDING_DIM = 128
    TRAIN_STEPS = 50000


# Configuration dictionary
config_by_name = {
    'desk': DeskScaleConfig,
    'paper': PaperScaleConfig,
    'default': DeskScaleConfig,
}
