"""
DeskAIA Configuration
All system settings and constants
"""
import os
import json
from pathlib import Path
from typing import Any
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class ConfigLoader:
    """Load typed values from environment variables"""

    @staticmethod
    def get_env(key: str, default: Any = None, required: bool = False, var_type: type = str) -> Any:
        """
        Get environment variable with type conversion and validation

        Args:
            key: Environment variable name
            default: Default value if not found
            required: Whether this variable is required
            var_type: Type to convert the value to

        Returns:
            Converted value or default
        """
        value = os.getenv(key)

        if value is None:
            if required:
                raise ValueError(f"Required environment variable '{key}' not found")
            return default

        try:
            if var_type == bool:
                return str(value).lower() in ('true', '1', 'yes', 'on')
            elif var_type == int:
                return int(value)
            elif var_type == float:
                return float(value)
            elif var_type in (list, dict):
                return json.loads(value)
            else:
                return var_type(value)
        except (ValueError, json.JSONDecodeError) as e:
            print(f"[CONFIG] Could not convert {key}='{value}' to {var_type.__name__}: {e}")
            return default


# Base Paths
BASE_DIR = Path(__file__).resolve().parent.parent
OUTPUT_DIR = Path(ConfigLoader.get_env("AIA_OUTPUT_DIR", str(BASE_DIR / "runs")))

# Synthetic World Settings
WORLD_DEFAULTS = {
    "N_VIDEOS": 40,
    "CLIPS_PER_VIDEO": 12,  # T
    "PERSONS_PER_CLIP": 3,
    "TARGETS_PER_CLIP": 3,  # first persons of a clip carry labels, the rest are context
    "OBJECTS_PER_CLIP": 2,  # capacity; actual count varies in [0, capacity]
    "D_IN": 24,  # prototype dims + slot one-hot + clip one-hot
    "NOISE_SIGMA": 0.0,
    "L_TRUE": 2,  # temporal rule looks back [t - L_TRUE, t - 1]
    "N_PERSON_STATES": 6,
    "N_OBJECT_STATES": 3,
    "SPEAKER_PROB": 0.25,
    "OPEN_PROB": 0.25,
    "CUP_PROB": 0.35,
    "WORKERS": 1,
}

# Interaction Aggregation Settings
IA_DEFAULTS = {
    "STRUCTURE": "serial",  # Options: 'parallel', 'serial', 'dense_serial', 'none'
    "ORDER": ["P", "O", "M"],
    "REPEATS": 2,  # N blocks per kind
    "D": 32,
    "FFN_ENABLED": True,
    "FFN_MULT": 2,  # hidden width h = FFN_MULT * d
    "HEADS": 1,
    "LN_EPS": 1e-5,
}

# Memory Pool Settings
MEMORY_DEFAULTS = {
    "CAPACITY": 4,  # K persons kept per clip
    "WINDOW": 6,  # L clips on each side
}

# Trainer Settings
TRAINER_DEFAULTS = {
    "MODE": "amu",  # Options: 'amu', 'joint', 'frozen'
    "LR": 0.05,
    "MOMENTUM": 0.9,
    "ITERS": 2000,
    "BATCH": 1,
    "LR_DECAY_STEPS": [],
    "LR_DECAY_FACTOR": 0.1,
    "REWEIGHT": True,
    "EVAL_FRACTION": 0.25,
    "LOG_EVERY": 100,
    "SEED": 0,
}

# Resource Benchmark Settings
BENCH_DEFAULTS = {
    "L_GRID": [1, 5, 15, 30],
    "JOINT_L_GRID": [1, 2, 3, 4],
    "ITERATIONS": 5,
    "CLIPS_PER_VIDEO": 12,
    "N_VIDEOS": 2,
}

# Joint training forwards 2L+1 clips per step; refuse anything larger than this window
RESOURCE_GUARD = {
    "JOINT_MAX_WINDOW": ConfigLoader.get_env("AIA_JOINT_MAX_WINDOW", 4, var_type=int),
}

# Logging Settings
LOGGING_CONFIG = {
    "LEVEL": ConfigLoader.get_env("LOG_LEVEL", "INFO"),
    "FORMAT": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    "FILE": None,  # set to a path to mirror logs into a file
}
