import os
import sys
import tomli
from pathlib import Path

# Default configuration - sized for desk-scale runs
default_config = {
    "server": {
        "host": "0.0.0.0",
        "port": 8000
    },
    "evaluator": {
        # Statement executions allowed per top-level call
        "max_steps": int(os.environ.get("DIFFLANG_MAX_STEPS", 10**9))
    },
    "numdiff": {
        "eps": 1e-8
    },
    "check": {
        "eps": 1e-6,
        "points": 100,
        "seed": 0,
        "tolerance": 1e-5
    },
    "fitting": {
        "gtol": 1e-8,
        "max_iter": 10000,
        "armijo_c": 1e-4,
        "shrink": 0.5,
        "initial_step": 1.0,
        "max_step": 1e6,
        # Finite-difference step of the ND fitting backend
        "fd_eps": 1e-6
    },
    "bench": {
        "reps": 5,
        "dims": [5, 64, 512, 4096],
        "full_dims": [5, 10, 20, 40, 80, 160, 320, 640, 1280, 2560, 5120, 10240, 20480],
        "primitives": ["gaus", "expo", "breitwigner_pdf"],
        "ad_tolerance": 1e-9,
        "nd_tolerance": 1e-3
    },
    "logging": {
        "level": os.environ.get("DIFFLANG_LOG_LEVEL", "WARNING"),
        "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    }
}

# Try to load config file if it exists
config_path = Path(
    os.environ.get(
        "DIFFLANG_CONFIG",
        Path(__file__).resolve().parents[2] / "config" / "config.toml"
    )
)
config = {section: dict(values) for section, values in default_config.items()}

if config_path.exists():
    try:
        with open(config_path, "rb") as f:
            file_config = tomli.load(f)

        # Merge file config with defaults
        for section, values in file_config.items():
            if section in config:
                config[section].update(values)
            else:
                config[section] = values
    except Exception as e:
        print(f"Error loading config file: {e}", file=sys.stderr)

# Environment wins over the file
if "DIFFLANG_MAX_STEPS" in os.environ:
    config["evaluator"]["max_steps"] = int(os.environ["DIFFLANG_MAX_STEPS"])
if "DIFFLANG_LOG_LEVEL" in os.environ:
    config["logging"]["level"] = os.environ["DIFFLANG_LOG_LEVEL"]
