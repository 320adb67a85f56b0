"""Model registry: checkpoint identifiers, output dims, layer selectors,
and preprocessing recipes.

Checkpoints load lazily on first use; the ``pixel`` entry is a
dependency-free stub that keeps the protocol testable without weights.
Grayscale inputs are replicated to three channels before preprocessing.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from PIL import Image

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


class ModelLoadError(RuntimeError):
    pass


@dataclass
class ModelRegistryEntry:
    tag: str
    checkpoint: str
    dim: int
    layer: str  # class-token | pooled | raw-pixels
    preprocessing: dict
    loader: Callable[["ModelRegistryEntry", bool], Callable]
    stub: bool = False
    _runner: Optional[Callable] = field(default=None, repr=False)

    def runner(self, deterministic: bool) -> Callable:
        if self._runner is None:
            self._runner = self.loader(self, deterministic)
        return self._runner

    def describe(self) -> dict:
        return {
            "name": self.tag,
            "dim": self.dim,
            "checkpoint": self.checkpoint,
            "layer": self.layer,
            "preprocessing": self.preprocessing,
            "stub": self.stub,
        }


def decode_image(png_bytes: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(png_bytes))
        img.load()
    except Exception as err:
        raise ValueError(f"undecodable image: {err}") from None
    return img.convert("RGB")  # grayscale replicated to three channels


def _to_tensor_batch(images, size, mean, std):
    import torch

    arrays = []
    for img in images:
        if img.size != (size, size):
            img = img.resize((size, size), Image.BICUBIC)
        arr = np.asarray(img, dtype=np.float32) / 255.0
        arr = (arr - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
        arrays.append(arr.transpose(2, 0, 1))
    return torch.from_numpy(np.stack(arrays))


def _torch_setup(deterministic: bool):
    import torch

    if deterministic:
        torch.manual_seed(0)
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.set_num_threads(1)


def _load_dinov2(entry: ModelRegistryEntry, deterministic: bool) -> Callable:
    try:
        import torch

        _torch_setup(deterministic)
        model = torch.hub.load("facebookresearch/dinov2", entry.checkpoint)
        model.eval()
    except Exception as err:
        raise ModelLoadError(f"cannot load {entry.tag}: {err}") from None

    def run(images):
        import torch

        batch = _to_tensor_batch(
            images, entry.preprocessing["size"], IMAGENET_MEAN, IMAGENET_STD
        )
        with torch.no_grad():
            out = model(batch)  # class token features
        return out.cpu().numpy().astype(np.float32)

    return run


def _load_clip(entry: ModelRegistryEntry, deterministic: bool) -> Callable:
    try:
        from transformers import CLIPVisionModelWithProjection

        _torch_setup(deterministic)
        model = CLIPVisionModelWithProjection.from_pretrained(entry.checkpoint)
        model.eval()
    except Exception as err:
        raise ModelLoadError(f"cannot load {entry.tag}: {err}") from None

    def run(images):
        import torch

        batch = _to_tensor_batch(images, entry.preprocessing["size"], CLIP_MEAN, CLIP_STD)
        with torch.no_grad():
            out = model(pixel_values=batch).image_embeds
        return out.cpu().numpy().astype(np.float32)

    return run


def _load_resnet50(entry: ModelRegistryEntry, deterministic: bool) -> Callable:
    try:
        import torch
        from torchvision import models

        _torch_setup(deterministic)
        weights = models.ResNet50_Weights.IMAGENET1K_V2
        model = models.resnet50(weights=weights)
        model.fc = torch.nn.Identity()  # global-average-pooled penultimate features
        model.eval()
    except Exception as err:
        raise ModelLoadError(f"cannot load {entry.tag}: {err}") from None

    def run(images):
        import torch

        batch = _to_tensor_batch(
            images, entry.preprocessing["size"], IMAGENET_MEAN, IMAGENET_STD
        )
        with torch.no_grad():
            out = model(batch)
        return out.cpu().numpy().astype(np.float32)

    return run


def _load_pixel(entry: ModelRegistryEntry, deterministic: bool) -> Callable:
    side = entry.preprocessing["pool_to"]

    def run(images):
        out = []
        for img in images:
            gray = np.asarray(img.convert("L"), dtype=np.float32)
            h, w = gray.shape
            if h % side or w % side:
                img2 = img.convert("L").resize((side * 7, side * 7), Image.BICUBIC)
                gray = np.asarray(img2, dtype=np.float32)
                h, w = gray.shape
            pooled = gray.reshape(side, h // side, side, w // side).mean(axis=(1, 3))
            out.append((pooled / 255.0).ravel())
        return np.stack(out).astype(np.float32)

    return run


def default_registry() -> dict:
    entries = [
        ModelRegistryEntry(
            tag="dinov2",
            checkpoint="dinov2_vitl14",
            dim=1024,
            layer="class-token",
            preprocessing={"size": 224, "mean": IMAGENET_MEAN, "std": IMAGENET_STD},
            loader=_load_dinov2,
        ),
        ModelRegistryEntry(
            tag="clip",
            checkpoint="openai/clip-vit-base-patch32",
            dim=512,
            layer="class-token",  # projected image embedding of the vision tower
            preprocessing={"size": 224, "mean": CLIP_MEAN, "std": CLIP_STD},
            loader=_load_clip,
        ),
        ModelRegistryEntry(
            tag="resnet50",
            checkpoint="torchvision/resnet50-IMAGENET1K_V2",
            dim=2048,
            layer="pooled",
            preprocessing={"size": 224, "mean": IMAGENET_MEAN, "std": IMAGENET_STD},
            loader=_load_resnet50,
        ),
        ModelRegistryEntry(
            tag="pixel",
            checkpoint="builtin",
            dim=1024,
            layer="raw-pixels",
            preprocessing={"pool_to": 32},
            loader=_load_pixel,
            stub=True,
        ),
    ]
    return {e.tag: e for e in entries}
