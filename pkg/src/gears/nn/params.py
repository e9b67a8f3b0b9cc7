"""Named parameters, Adam updates and the JSON + float64 blob checkpoint format."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Tensor

CHECKPOINT_FORMAT = "gears-params/1"


class ParamStore:
    """Ordered named parameters with Adam moments and a step counter."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=np.float64)
        self.params[name] = Tensor(value, requires_grad=True)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        return self.params[name]

    def add_uniform(self, name: str, shape, fan_in: int, rng: np.random.Generator) -> Tensor:
        bound = np.sqrt(1.0 / fan_in)
        return self.add(name, rng.uniform(-bound, bound, size=shape))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def n_values(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def adam_step(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        """One bias-corrected Adam update; parameters without a gradient see a zero gradient."""
        self.step += 1
        c1 = 1.0 - beta1**self.step
        c2 = 1.0 - beta2**self.step
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m[name] = beta1 * self.m[name] + (1.0 - beta1) * g
            v = self.v[name] = beta2 * self.v[name] + (1.0 - beta2) * g * g
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)

    def values(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for k, p in self.params.items():
            out.add(k, p.data)
            out.m[k] = self.m[k].copy()
            out.v[k] = self.v[k].copy()
        out.step = self.step
        return out

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        """Write ``<path>.json`` (manifest) and ``<path>.bin`` (little-endian float64)."""
        path = Path(path)
        entries, chunks, offset = [], [], 0
        for kind, table in (("param", {k: p.data for k, p in self.params.items()}), ("m", self.m), ("v", self.v)):
            for name, arr in table.items():
                blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
                entries.append({"name": name, "kind": kind, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
                chunks.append(blob)
                offset += len(blob)
        manifest = {"format": CHECKPOINT_FORMAT, "step": self.step, "entries": entries, "meta": meta or {}}
        path.with_suffix(".json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
        path.with_suffix(".bin").write_bytes(b"".join(chunks))

    @classmethod
    def load(cls, path: str | Path) -> tuple["ParamStore", dict]:
        path = Path(path)
        manifest = json.loads(path.with_suffix(".json").read_text())
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unknown checkpoint format {manifest.get('format')!r}")
        blob = path.with_suffix(".bin").read_bytes()
        store = cls()
        moments = []
        for e in manifest["entries"]:
            arr = np.frombuffer(blob, dtype="<f8", count=e["count"], offset=e["offset"]).astype(np.float64).reshape(e["shape"])
            if e["kind"] == "param":
                store.add(e["name"], arr)
            else:
                moments.append((e["kind"], e["name"], arr))
        for kind, name, arr in moments:
            getattr(store, kind)[name] = arr
        store.step = int(manifest["step"])
        return store, manifest.get("meta", {})
