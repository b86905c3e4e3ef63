"""Generate the committed toy10 fixtures.

Trains a small MobileNetV2-style network on the scikit-learn digits set
(bundled with scikit-learn, no download), folds batch normalization into
affine layers and writes:

  toy10.model    SPLITMDL v1
  toy10.data     SPLITDAT v1 (held-out digits, never seen in training)
  manifest.json  hashes, shape table, reference accuracy and logits

Usage: python gen_fixtures.py [--seed 7] [--out ../../crates/core/fixtures]
"""

import argparse
import json
import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.datasets import load_digits

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

TAG_CONV, TAG_DW, TAG_AFFINE, TAG_RELU6, TAG_GAP, TAG_DENSE, TAG_RESIDUAL = range(7)

TRAIN_COUNT = 897
INPUT_SIZE = 16


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def is_test_index(i: int) -> bool:
    return fnv1a64(struct.pack("<Q", i)) % 5 == 0


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.stem = nn.Conv2d(1, 8, 3, 2, 1, bias=False)
        self.stem_bn = nn.BatchNorm2d(8)
        # block A: 8 -> 24 -> dw s2 -> 12
        self.a_exp = nn.Conv2d(8, 24, 1, bias=False)
        self.a_exp_bn = nn.BatchNorm2d(24)
        self.a_dw = nn.Conv2d(24, 24, 3, 2, 1, groups=24, bias=False)
        self.a_dw_bn = nn.BatchNorm2d(24)
        self.a_proj = nn.Conv2d(24, 12, 1, bias=False)
        self.a_proj_bn = nn.BatchNorm2d(12)
        # block B: residual 12 -> 36 -> dw s1 -> 12
        self.b_exp = nn.Conv2d(12, 36, 1, bias=False)
        self.b_exp_bn = nn.BatchNorm2d(36)
        self.b_dw = nn.Conv2d(36, 36, 3, 1, 1, groups=36, bias=False)
        self.b_dw_bn = nn.BatchNorm2d(36)
        self.b_proj = nn.Conv2d(36, 12, 1, bias=False)
        self.b_proj_bn = nn.BatchNorm2d(12)
        # head
        self.head = nn.Conv2d(12, 64, 1, bias=False)
        self.head_bn = nn.BatchNorm2d(64)
        self.fc = nn.Linear(64, 10)

    def forward(self, x):
        x = F.relu6(self.stem_bn(self.stem(x)))
        x = F.relu6(self.a_exp_bn(self.a_exp(x)))
        x = F.relu6(self.a_dw_bn(self.a_dw(x)))
        a = self.a_proj_bn(self.a_proj(x))
        x = F.relu6(self.b_exp_bn(self.b_exp(a)))
        x = F.relu6(self.b_dw_bn(self.b_dw(x)))
        x = self.b_proj_bn(self.b_proj(x)) + a
        x = F.relu6(self.head_bn(self.head(x)))
        x = x.mean(dim=(2, 3))
        return self.fc(x)


def fold(bn: nn.BatchNorm2d):
    scale = bn.weight / torch.sqrt(bn.running_var + bn.eps)
    shift = bn.bias - bn.running_mean * scale
    return scale.detach().numpy(), shift.detach().numpy()


def f32(a) -> bytes:
    a = np.ascontiguousarray(np.asarray(a, dtype="<f4")).ravel()
    return struct.pack("<Q", a.size) + a.tobytes()


def export_layers(net: Net):
    """Returns a list of (tag, param block bytes, weights, bias)."""
    layers = []

    def conv(m: nn.Conv2d):
        w = m.weight.detach().numpy()
        if m.groups == 1:
            params = struct.pack(
                "<5I", m.in_channels, m.out_channels, m.kernel_size[0], m.stride[0], m.padding[0]
            )
            layers.append((TAG_CONV, params, w, np.zeros(m.out_channels)))
        else:
            params = struct.pack("<4I", m.in_channels, m.kernel_size[0], m.stride[0], m.padding[0])
            layers.append((TAG_DW, params, w, np.zeros(m.out_channels)))

    def affine(bn):
        scale, shift = fold(bn)
        layers.append((TAG_AFFINE, struct.pack("<I", scale.size), scale, shift))

    def relu6():
        layers.append((TAG_RELU6, b"", np.zeros(0), np.zeros(0)))

    conv(net.stem); affine(net.stem_bn); relu6()
    conv(net.a_exp); affine(net.a_exp_bn); relu6()
    conv(net.a_dw); affine(net.a_dw_bn); relu6()
    conv(net.a_proj); affine(net.a_proj_bn)
    block_source = len(layers) - 1
    conv(net.b_exp); affine(net.b_exp_bn); relu6()
    conv(net.b_dw); affine(net.b_dw_bn); relu6()
    conv(net.b_proj); affine(net.b_proj_bn)
    layers.append((TAG_RESIDUAL, struct.pack("<I", block_source), np.zeros(0), np.zeros(0)))
    conv(net.head); affine(net.head_bn); relu6()
    layers.append((TAG_GAP, b"", np.zeros(0), np.zeros(0)))
    w = net.fc.weight.detach().numpy()
    layers.append((TAG_DENSE, struct.pack("<2I", 64, 10), w, net.fc.bias.detach().numpy()))
    return layers


def write_model(path: Path, net: Net) -> bytes:
    name = b"toy10"
    out = bytearray(b"SPLITMDL")
    out += struct.pack("<I", 1)
    out += struct.pack("<H", len(name)) + name
    out += struct.pack("<f", 1.0)
    out += struct.pack("<I", INPUT_SIZE)
    out += struct.pack("<I", 10)
    out += struct.pack("<3I", 1, INPUT_SIZE, INPUT_SIZE)
    layers = export_layers(net)
    out += struct.pack("<I", len(layers))
    for tag, params, w, b in layers:
        out += struct.pack("<B", tag) + params + f32(w) + f32(b)
    out += struct.pack("<Q", fnv1a64(bytes(out)))
    path.write_bytes(bytes(out))
    return bytes(out)


def write_dataset(path: Path, images: np.ndarray, labels: np.ndarray) -> bytes:
    out = bytearray(b"SPLITDAT")
    out += struct.pack("<I", 1)
    out += struct.pack("<I", len(labels))
    out += struct.pack("<3I", 1, INPUT_SIZE, INPUT_SIZE)
    for img, lab in zip(images, labels):
        out += struct.pack("<I", int(lab))
        out += np.ascontiguousarray(img, dtype="<f4").tobytes()
    out += struct.pack("<Q", fnv1a64(bytes(out)))
    path.write_bytes(bytes(out))
    return bytes(out)


def layer_shapes(net: Net, x: torch.Tensor):
    """Input shape of every exported layer, obtained by tracing module outputs."""
    shapes = []
    with torch.no_grad():
        def push(t):
            shapes.append(list(t.shape[1:]))

        push(x); x = net.stem(x); push(x); x = net.stem_bn(x); push(x); x = F.relu6(x)
        push(x); x = net.a_exp(x); push(x); x = net.a_exp_bn(x); push(x); x = F.relu6(x)
        push(x); x = net.a_dw(x); push(x); x = net.a_dw_bn(x); push(x); x = F.relu6(x)
        push(x); x = net.a_proj(x); push(x); a = net.a_proj_bn(x)
        push(a); x = net.b_exp(a); push(x); x = net.b_exp_bn(x); push(x); x = F.relu6(x)
        push(x); x = net.b_dw(x); push(x); x = net.b_dw_bn(x); push(x); x = F.relu6(x)
        push(x); x = net.b_proj(x); push(x); x = net.b_proj_bn(x)
        push(x); x = x + a
        push(x); x = net.head(x); push(x); x = net.head_bn(x); push(x); x = F.relu6(x)
        push(x); x = x.mean(dim=(2, 3))
        push(x); x = net.fc(x)
        push(x)
    return shapes


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=80)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[2] / "crates/core/fixtures"))
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    torch.set_num_threads(1)
    rng = np.random.default_rng(args.seed)

    digits = load_digits()
    raw = torch.tensor(digits.images, dtype=torch.float32).unsqueeze(1) / 16.0
    images = F.interpolate(raw, size=(INPUT_SIZE, INPUT_SIZE), mode="bilinear", align_corners=False)
    images = images.numpy().astype(np.float32)
    labels = digits.target.astype(np.int64)

    order = rng.permutation(len(labels))
    train_idx, held_idx = order[:TRAIN_COUNT], order[TRAIN_COUNT:]
    xt = torch.tensor(images[train_idx])
    yt = torch.tensor(labels[train_idx])

    net = Net()
    opt = torch.optim.Adam(net.parameters(), lr=3e-3, weight_decay=1e-4)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, args.epochs)
    for _ in range(args.epochs):
        net.train()
        perm = torch.randperm(len(yt))
        for s in range(0, len(yt), 64):
            idx = perm[s:s + 64]
            xb = xt[idx]
            # random +-1 pixel shifts
            dx, dy = (int(v) for v in torch.randint(-1, 2, (2,)))
            xb = torch.roll(xb, shifts=(dy, dx), dims=(2, 3))
            loss = F.cross_entropy(net(xb), yt[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
        sched.step()
    net.eval()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    held_images = images[held_idx]
    held_labels = labels[held_idx]
    model_bytes = write_model(out / "toy10.model", net)
    data_bytes = write_dataset(out / "toy10.data", held_images, held_labels)

    test = [i for i in range(len(held_labels)) if is_test_index(i)]
    with torch.no_grad():
        logits = net(torch.tensor(held_images[test])).numpy()
    preds = logits.argmax(axis=1)
    acc = float((preds == held_labels[test]).mean())

    manifest = {
        "name": "toy10",
        "seed": args.seed,
        "width_multiplier": 1.0,
        "input_size": INPUT_SIZE,
        "class_count": 10,
        "model_fnv1a64": f"{fnv1a64(model_bytes):016x}",
        "dataset_fnv1a64": f"{fnv1a64(data_bytes):016x}",
        "dataset_count": int(len(held_labels)),
        "test_count": len(test),
        "baseline_top1": acc,
        "layer_input_shapes": layer_shapes(net, torch.tensor(held_images[:1])),
        "first_test_index": test[0],
        "first_test_label": int(held_labels[test[0]]),
        "first_test_prediction": int(preds[0]),
        "reference_logits": [
            {"index": test[j], "logits": [float(v) for v in logits[j]]} for j in range(5)
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"test accuracy {acc:.4f} on {len(test)} images")


if __name__ == "__main__":
    main()
