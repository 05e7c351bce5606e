"""
Stable-BN Configuration Module
Loads environment variables and provides configuration settings.
"""

import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class ConfigError(ValueError):
    """Invalid configuration value or experiment file."""


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() == "true"


class Config:
    """Configuration class for the stable structure-learning engine."""

    # Search hyperparameters
    TABU_LEN = int(os.getenv("STABLEBN_TABU_LEN", "10"))
    NOINC = int(os.getenv("STABLEBN_NOINC", "15"))
    MAX_ITER = int(os.getenv("STABLEBN_MAX_ITER", "100000"))

    # Scoring
    BDEU_ISS = float(os.getenv("STABLEBN_BDEU_ISS", "1.0"))

    # Experiment harness
    TIME_LIMIT_S = float(os.getenv("STABLEBN_TIME_LIMIT_S", "600"))  # 10 minutes per run
    WORKERS = int(os.getenv("STABLEBN_WORKERS", "1"))
    N_RANDOMIZATIONS = int(os.getenv("STABLEBN_N_RANDOMIZATIONS", "25"))
    BASE_SEED = int(os.getenv("STABLEBN_BASE_SEED", "0"))

    # Paths
    OUTPUT_DIR = os.getenv("STABLEBN_OUTPUT_DIR", "results")
    LOGS_DIR = os.getenv("STABLEBN_LOGS_DIR", "logs")
    MODELS_DIR = os.getenv("STABLEBN_MODELS_DIR", "models")

    # Optional SQLite mirror of run records
    USE_SQLITE = _env_bool("STABLEBN_USE_SQLITE", "false")
    RESULTS_DB_PATH = os.getenv("STABLEBN_RESULTS_DB_PATH", os.path.join("data", "stable_bn.db"))

    @classmethod
    def validate(cls):
        """Validate configured values and create output directories."""
        if cls.TABU_LEN < 1:
            raise ConfigError(f"STABLEBN_TABU_LEN must be >= 1, got {cls.TABU_LEN}")
        if cls.NOINC < 1:
            raise ConfigError(f"STABLEBN_NOINC must be >= 1, got {cls.NOINC}")
        if cls.MAX_ITER < 1:
            raise ConfigError(f"STABLEBN_MAX_ITER must be >= 1, got {cls.MAX_ITER}")
        if cls.BDEU_ISS <= 0:
            raise ConfigError(f"STABLEBN_BDEU_ISS must be > 0, got {cls.BDEU_ISS}")
        if cls.WORKERS < 1:
            raise ConfigError(f"STABLEBN_WORKERS must be >= 1, got {cls.WORKERS}")
        if cls.N_RANDOMIZATIONS < 1:
            raise ConfigError(f"STABLEBN_N_RANDOMIZATIONS must be >= 1, got {cls.N_RANDOMIZATIONS}")

        # Create directories if they don't exist
        os.makedirs(cls.OUTPUT_DIR, exist_ok=True)
        os.makedirs(cls.LOGS_DIR, exist_ok=True)
        if cls.USE_SQLITE:
            db_dir = os.path.dirname(cls.RESULTS_DB_PATH)
            if db_dir:
                os.makedirs(db_dir, exist_ok=True)

        return True
