"""Versioned flat-binary checkpoint container.

Layout: magic, format version, a sorted JSON header describing every array
(name, dtype, shape, byte offset), then the raw C-order array payloads. The
encoding has no timestamps or compression, so saving identical state twice
produces identical bytes, and save -> load -> save is a byte-level fixed
point.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig

MAGIC = b"PCDC"
FORMAT_VERSION = 1

MODEL_PREFIX = "model/"
ADAM_PREFIX = "adam/"


@dataclasses.dataclass
class Checkpoint:
    format_version: int
    iteration: int
    config: TrainConfig
    arrays: dict[str, np.ndarray]

    def model_arrays(self) -> dict[str, np.ndarray]:
        return {
            k[len(MODEL_PREFIX):]: v
            for k, v in self.arrays.items()
            if k.startswith(MODEL_PREFIX)
        }

    def optimizer_arrays(self) -> dict[str, np.ndarray]:
        return {
            k[len(ADAM_PREFIX):]: v
            for k, v in self.arrays.items()
            if k.startswith(ADAM_PREFIX)
        }


def _collect_arrays(
    model: torch.nn.Module, optimizer: torch.optim.Optimizer | None
) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for name, tensor in model.state_dict().items():
        arrays[MODEL_PREFIX + name] = tensor.detach().cpu().numpy()
    if optimizer is not None:
        named = dict(model.named_parameters())
        id_to_name = {id(p): n for n, p in named.items()}
        for param, state in optimizer.state.items():
            pname = id_to_name.get(id(param))
            if pname is None:
                raise ValueError("optimizer tracks a parameter not owned by the model")
            for key, value in state.items():
                arr = value.detach().cpu().numpy() if torch.is_tensor(value) else np.asarray(value)
                arrays[f"{ADAM_PREFIX}{pname}/{key}"] = arr
    return arrays


def save_checkpoint(
    path: str | Path,
    model: torch.nn.Module,
    config: TrainConfig,
    iteration: int,
    optimizer: torch.optim.Optimizer | None = None,
) -> Path:
    path = Path(path)
    arrays = _collect_arrays(model, optimizer)
    entries = []
    offset = 0
    payloads = []
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        data = arr.tobytes(order="C")  # 0-dim arrays must keep their shape
        entries.append(
            {
                "name": name,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(data),
            }
        )
        payloads.append(data)
        offset += len(data)
    header = json.dumps(
        {
            "format_version": FORMAT_VERSION,
            "iteration": int(iteration),
            "config": config.to_dict(),
            "arrays": entries,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for data in payloads:
            fh.write(data)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint container (bad magic)")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise ValueError(
            f"{path}: unsupported checkpoint format version {version}, "
            f"expected {FORMAT_VERSION}"
        )
    (header_len,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    data_start = 16 + header_len
    arrays = {}
    for entry in header["arrays"]:
        start = data_start + entry["offset"]
        raw = blob[start : start + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(
            entry["shape"]
        ).copy()
    return Checkpoint(
        format_version=version,
        iteration=header["iteration"],
        config=TrainConfig.from_dict(header["config"]),
        arrays=arrays,
    )


def restore_model(checkpoint: Checkpoint, model: torch.nn.Module) -> None:
    """Load model parameters and buffers, refusing shape or name mismatches."""
    saved = checkpoint.model_arrays()
    state = model.state_dict()
    missing = sorted(set(state) - set(saved))
    unexpected = sorted(set(saved) - set(state))
    if missing or unexpected:
        raise ValueError(
            f"checkpoint does not match model: missing {missing}, unexpected {unexpected}"
        )
    new_state = {}
    for name, tensor in state.items():
        arr = saved[name]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise ValueError(
                f"checkpoint entry {name} has shape {tuple(arr.shape)}, "
                f"model expects {tuple(tensor.shape)}"
            )
        new_state[name] = torch.from_numpy(arr).to(dtype=tensor.dtype)
    model.load_state_dict(new_state)


def restore_optimizer(
    checkpoint: Checkpoint, optimizer: torch.optim.Optimizer, model: torch.nn.Module
) -> None:
    """Rebuild Adam moment estimates by parameter name.

    Parameters absent from the saved state stay stateless, matching an
    uninterrupted run in which they never received a gradient.
    """
    saved = checkpoint.optimizer_arrays()
    if not saved:
        raise ValueError("checkpoint carries no optimizer state")
    grouped: dict[str, dict[str, np.ndarray]] = {}
    for full, arr in saved.items():
        pname, _, key = full.rpartition("/")
        grouped.setdefault(pname, {})[key] = arr
    named = dict(model.named_parameters())
    unknown = sorted(set(grouped) - set(named))
    if unknown:
        raise ValueError(f"optimizer state for unknown parameters: {unknown}")
    for pname, entries in grouped.items():
        param = named[pname]
        state = {}
        for key in ("step", "exp_avg", "exp_avg_sq"):
            if key not in entries:
                raise ValueError(f"optimizer state missing entry {pname}/{key}")
            tensor = torch.from_numpy(entries[key])
            state[key] = tensor if key == "step" else tensor.to(dtype=param.dtype)
        optimizer.state[param] = state


def load_model(path: str | Path) -> tuple[torch.nn.Module, TrainConfig, int]:
    """Build the network described by a checkpoint and load its weights."""
    from .models.network import build_model

    checkpoint = load_checkpoint(path)
    model = build_model(checkpoint.config)
    restore_model(checkpoint, model)
    return model, checkpoint.config, checkpoint.iteration


def load_backbone_weights(path: str | Path, model: torch.nn.Module) -> None:
    """Copy only encoder weights out of a checkpoint (pretraining hand-off)."""
    checkpoint = load_checkpoint(path)
    saved = checkpoint.model_arrays()
    prefix = "encoder."
    encoder_state = {
        k: torch.from_numpy(v) for k, v in saved.items() if k.startswith(prefix)
    }
    if not encoder_state:
        raise ValueError(f"{path} holds no encoder weights")
    state = model.state_dict()
    for name, tensor in encoder_state.items():
        if name not in state:
            raise ValueError(f"backbone entry {name} not present in model")
        if tuple(state[name].shape) != tuple(tensor.shape):
            raise ValueError(
                f"backbone entry {name} has shape {tuple(tensor.shape)}, "
                f"model expects {tuple(state[name].shape)}"
            )
        state[name] = tensor.to(state[name].dtype)
    model.load_state_dict(state)
