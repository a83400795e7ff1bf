"""
Utility functions for graph-pde
Logging setup, file output helpers and seeded random generators
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from .config import CSV_FLOAT_FORMAT, JSON_INDENT, LOGGING_CONFIG, GraphPDEConfig

PathLike = Union[str, Path]


def setup_logging(log_file: Optional[PathLike] = None, level: str = LOGGING_CONFIG['level']) -> logging.Logger:
    """Setup logging configuration"""
    logger = logging.getLogger(LOGGING_CONFIG['logger_name'])
    logger.setLevel(getattr(logging, level.upper()))

    formatter = logging.Formatter(LOGGING_CONFIG['format'])

    # Console handler, added once
    if not any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
               for h in logger.handlers):
        console_handler = logging.StreamHandler()
        console_handler.setLevel(getattr(logging, level.upper()))
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if log_file is not None:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        known = {getattr(h, 'baseFilename', None) for h in logger.handlers}
        if str(log_path.resolve()) not in known:
            file_handler = logging.FileHandler(log_path)
            file_handler.setLevel(getattr(logging, level.upper()))
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

    return logger


def make_rng(seed: Optional[int]) -> np.random.Generator:
    """Seeded generator; None falls back to the configured default seed"""
    return np.random.default_rng(GraphPDEConfig.DEFAULT_SEED if seed is None else seed)


def write_json(data: Dict[str, Any], path: PathLike) -> str:
    """Write a JSON document with stable key order"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=JSON_INDENT, ensure_ascii=False)
        f.write("\n")
    return str(out)


def read_json(path: PathLike) -> Any:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def write_csv(df: pd.DataFrame, path: PathLike) -> str:
    """Write a DataFrame with round-trip exact floats"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(out, index=False, encoding='utf-8', float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return str(out)


def read_csv(path: PathLike, **kwargs) -> pd.DataFrame:
    return pd.read_csv(path, float_precision='round_trip', **kwargs)
