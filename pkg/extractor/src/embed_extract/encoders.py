"""Encoder wrappers. Each encoder preprocesses PIL images to a float32 CHW
array and embeds batches into fixed-width feature rows.

torch / torchvision are imported lazily so the package (and the stub-encoder
test path) works without them installed.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def resize_center_crop(img: Image.Image, resize: int, crop: int) -> Image.Image:
    w, h = img.size
    scale = resize / min(w, h)
    img = img.resize((max(1, round(w * scale)), max(1, round(h * scale))),
                     Image.BILINEAR)
    w, h = img.size
    left = (w - crop) // 2
    top = (h - crop) // 2
    return img.crop((left, top, left + crop, top + crop))


def to_normalized_chw(img: Image.Image) -> np.ndarray:
    arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    arr = (arr - IMAGENET_MEAN) / IMAGENET_STD
    return arr.transpose(2, 0, 1)


class TorchEncoder:
    """Shared batching wrapper around a torch module returning (B, D)."""

    def __init__(self, model, name: str, dims: int, resize: int, crop: int,
                 device: str = "cpu", weights_id: str = "pretrained"):
        import torch

        self._torch = torch
        self.model = model.eval().to(device)
        self.device = device
        self.name = name
        self.dims = dims
        self.resize = resize
        self.crop = crop
        self.weights_id = weights_id

    @property
    def preprocess_id(self) -> str:
        return f"resize{self.resize}-centercrop{self.crop}-imagenet-norm"

    def preprocess(self, img: Image.Image) -> np.ndarray:
        return to_normalized_chw(resize_center_crop(img, self.resize, self.crop))

    def embed(self, batch: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            x = torch.from_numpy(np.ascontiguousarray(batch)).to(self.device)
            out = self.model(x)
        feats = out.detach().cpu().numpy().astype(np.float32)
        if feats.ndim != 2 or feats.shape[1] != self.dims:
            raise ValueError(f"encoder returned shape {feats.shape}, "
                             f"expected (B, {self.dims})")
        return feats


def build_inception_encoder(device: str = "cpu", pretrained: bool = True,
                            init_seed: int = 0) -> TorchEncoder:
    """Inception-v3 pooled pre-classifier features (2048-dim).

    With pretrained=False the architecture gets a seeded random
    initialization; useful for offline determinism tests.
    """
    import torch
    from torchvision.models import inception_v3

    if pretrained:
        from torchvision.models import Inception_V3_Weights

        try:
            model = inception_v3(weights=Inception_V3_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise RuntimeError(f"weight download failure for inception: {exc}") from exc
        weights_id = "torchvision-imagenet1k-v1"
    else:
        torch.manual_seed(init_seed)
        model = inception_v3(weights=None, init_weights=True)
        weights_id = f"random-init-seed{init_seed}"
    model.aux_logits = False
    model.AuxLogits = None
    model.fc = torch.nn.Identity()
    return TorchEncoder(model, name="inception", dims=2048, resize=342,
                        crop=299, device=device, weights_id=weights_id)


def build_dino_encoder(device: str = "cpu",
                       hub_model: str = "dinov2_vitb14") -> TorchEncoder:
    """DINOv2 class-token features (768-dim for the ViT-B/14 checkpoint)."""
    import torch

    try:
        model = torch.hub.load("facebookresearch/dinov2", hub_model)
    except Exception as exc:
        raise RuntimeError(f"weight download failure for dino: {exc}") from exc
    dims = int(getattr(model, "embed_dim", 768))
    return TorchEncoder(model, name="dino", dims=dims, resize=256, crop=224,
                        device=device, weights_id=f"torchhub-{hub_model}")


def load_encoder(tag: str, device: str = "cpu"):
    if tag == "inception":
        return build_inception_encoder(device=device)
    if tag == "dino":
        return build_dino_encoder(device=device)
    raise ValueError(f"unknown encoder tag: {tag!r}")
