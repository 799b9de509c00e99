"""Checkpoint container: parameter path -> float64 array, plus a JSON config block.

Stored as an uncompressed ``.npz`` archive; arrays are little-endian float64
so a save/load round trip is bit-exact.
"""

import json
import os
import tempfile

import zipfile

import numpy as np

from ..errors import ValidationError

_CONFIG_KEY = "__config__"


def save_checkpoint(path, state, config):
    arrays = {k: np.ascontiguousarray(v, dtype="<f8") for k, v in state.items()}
    if _CONFIG_KEY in arrays:
        raise ValueError(f"reserved key {_CONFIG_KEY}")
    blob = np.frombuffer(json.dumps(config, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays, **{_CONFIG_KEY: blob})
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            if _CONFIG_KEY not in z.files:
                raise ValidationError(f"{path}: not a checkpoint (no config block)")
            config = json.loads(z[_CONFIG_KEY].tobytes().decode("utf-8"))
            state = {k: z[k].copy() for k in z.files if k != _CONFIG_KEY}
    except ValidationError:
        raise
    except (zipfile.BadZipFile, EOFError, ValueError) as exc:
        raise ValidationError(f"{path}: corrupt checkpoint ({exc})") from None
    return state, config
