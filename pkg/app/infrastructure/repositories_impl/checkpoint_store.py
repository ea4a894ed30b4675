"""
Formato de checkpoint:

    STRONGCAP-CKPT 1
    meta <clave> <valor JSON>          (configuración del modelo y metadatos libres)
    tensor <nombre> <dim0,dim1,...>
    end
    <bytes float32 little-endian de cada tensor, en el orden de la cabecera>

Sin marcas de tiempo: dos guardados de los mismos parámetros son idénticos
byte a byte, y cargar → guardar reproduce el archivo exacto.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from app.domain.embeddings import PARAM_NAMES, EncoderParams, ModelConfig, TensorBundle
from app.domain.exceptions import ShapeMismatchError, ValidationError
from app.domain.repositories import CheckpointRepository, CheckpointSeries
from app.infrastructure.error_handlers import SafeOperations

logger = logging.getLogger(__name__)

MAGIC = "STRONGCAP-CKPT 1"
_DTYPE = np.dtype("<f4")
_MODEL_PREFIX = "model."


class CheckpointStore(CheckpointRepository):
    def encode(self, params: EncoderParams, metadata: Optional[Dict[str, str]] = None) -> bytes:
        cfg = params.config
        header = [MAGIC,
                  f"meta seed {json.dumps(str(cfg.seed))}",
                  f"meta dim {json.dumps(str(cfg.dim))}",
                  f"meta hop {json.dumps(repr(cfg.hop_s))}"]
        for key, value in cfg.model_dump().items():
            header.append(f"meta {_MODEL_PREFIX}{key} {json.dumps(value)}")
        for key in sorted(metadata or {}):
            if " " in key or "\n" in key:
                raise ValidationError(f"clave de metadatos inválida: {key!r}", field="metadata")
            header.append(f"meta {key} {json.dumps(str(metadata[key]))}")

        blobs = []
        for name in PARAM_NAMES:
            tensor = np.asarray(params[name])
            header.append(f"tensor {name} {','.join(str(d) for d in tensor.shape)}")
            blobs.append(np.ascontiguousarray(tensor, dtype=_DTYPE).tobytes())
        header.append("end")
        return ("\n".join(header) + "\n").encode("utf-8") + b"".join(blobs)

    def decode(self, data: bytes) -> Tuple[EncoderParams, Dict[str, str]]:
        marker = b"\nend\n"
        cut = data.find(marker)
        if not data.startswith(MAGIC.encode("utf-8")) or cut < 0:
            raise ValidationError("no es un checkpoint de strongcap", field="header")
        lines = data[:cut].decode("utf-8").split("\n")[1:]
        body = memoryview(data)[cut + len(marker):]

        model_fields, metadata, tensors = {}, {}, {}
        offset = 0
        for line in lines:
            kind, name, value = line.split(" ", 2)
            if kind == "meta":
                parsed = json.loads(value)
                if name.startswith(_MODEL_PREFIX):
                    model_fields[name[len(_MODEL_PREFIX):]] = parsed
                elif name not in ("seed", "dim", "hop"):
                    metadata[name] = parsed
            elif kind == "tensor":
                shape = tuple(int(d) for d in value.split(",")) if value else ()
                count = int(np.prod(shape)) if shape else 1
                size = count * _DTYPE.itemsize
                if offset + size > len(body):
                    raise ValidationError(f"checkpoint truncado en el tensor {name}", field=name)
                raw = np.frombuffer(body[offset:offset + size], dtype=_DTYPE)
                tensors[name] = raw.astype(np.float64).reshape(shape)
                offset += size
            else:
                raise ValidationError(f"línea de cabecera desconocida: {line!r}", field="header")

        if offset != len(body):
            raise ValidationError(f"{len(body) - offset} bytes sobrantes tras los tensores", field="body")
        missing = set(PARAM_NAMES) - set(tensors)
        if missing:
            raise ShapeMismatchError(f"faltan tensores en el checkpoint: {sorted(missing)}")
        return EncoderParams(config=ModelConfig(**model_fields), weights=TensorBundle(tensors)), metadata

    def save(self, path: Path, params: EncoderParams, metadata: Optional[Dict[str, str]] = None) -> None:
        if not SafeOperations.safe_file_write(str(path), self.encode(params, metadata), logger=logger):
            raise OSError(f"no se pudo escribir el checkpoint {path}")

    def load(self, path: Path) -> Tuple[EncoderParams, Dict[str, str]]:
        with open(path, "rb") as f:
            return self.decode(f.read())


class RunCheckpoints(CheckpointSeries):
    """Checkpoints de una ejecución: epoch_NNN.ckpt por época y best.ckpt"""

    def __init__(self, out_dir: Path, store: Optional[CheckpointStore] = None,
                 metadata: Optional[Dict[str, str]] = None):
        self.out_dir = Path(out_dir)
        self.store = store or CheckpointStore()
        self.metadata = dict(metadata or {})

    def _save(self, path: Path, params: EncoderParams, metadata: Optional[Dict[str, str]]) -> Path:
        self.store.save(path, params, {**self.metadata, **(metadata or {})})
        return path

    def save_epoch(self, epoch: int, params: EncoderParams, metadata: Dict[str, str] = None) -> Path:
        return self._save(self.out_dir / f"epoch_{epoch:03d}.ckpt", params, metadata)

    def save_best(self, params: EncoderParams, metadata: Dict[str, str] = None) -> Path:
        return self._save(self.out_dir / "best.ckpt", params, metadata)
