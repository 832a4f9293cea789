"""Regenerates the small ONNX graphs used by the extractor tests.

Requires torch and onnx. Run from this directory:  python3 make_onnx_fixtures.py
"""
import hashlib
import json

import torch


class Pool768(torch.nn.Module):
    """14x14 average pooling over a 224x224 input: 16*16*3 = 768 features."""

    def forward(self, x):
        return torch.nn.functional.avg_pool2d(x, 14).flatten(1)


class Conv2048(torch.nn.Module):
    """1x1 conv to 2048 channels followed by global average pooling."""

    def __init__(self):
        super().__init__()
        torch.manual_seed(0)
        self.conv = torch.nn.Conv2d(3, 2048, 1)

    def forward(self, x):
        return torch.nn.functional.adaptive_avg_pool2d(self.conv(x), 1).flatten(1)


def export(module, path):
    torch.onnx.export(module.eval(), torch.zeros(1, 3, 224, 224), path,
                      input_names=["input"], output_names=["features"],
                      dynamic_axes={"input": {0: "N"}, "features": {0: "N"}},
                      opset_version=13, dynamo=False)
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def sidecar(path, name, model_file, dim, sha):
    meta = {"name": name, "input_side": 224, "feature_dim": dim,
            "norm_mean": [0.5, 0.5, 0.5], "norm_std": [0.5, 0.5, 0.5],
            "sha256": sha, "model_file": model_file}
    with open(path, "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    sha = export(Pool768(), "pool768.onnx")
    sidecar("pool768.json", "pool768", "pool768.onnx", 768, sha)
    sha = export(Conv2048(), "conv2048.onnx")
    sidecar("conv2048.json", "conv2048", "conv2048.onnx", 2048, sha)
    sidecar("conv2048_claims512.json", "conv2048", "conv2048.onnx", 512, sha)
