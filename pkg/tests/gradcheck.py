"""Central finite-difference gradient check for the sequence classifiers."""

import numpy as np
import torch
from torch import nn

from deptweets.models.neural import TextCNN, TextLSTM

STEP = 1e-3
N_VOCAB, EMBED, MAX_LEN = 20, 6, 8


def tiny_batch(seed: int = 0):
    g = torch.Generator().manual_seed(seed)
    lengths = torch.tensor([8, 5, 3])
    ids = torch.zeros((3, MAX_LEN), dtype=torch.long)
    for r, n in enumerate(lengths):
        ids[r, :n] = torch.randint(1, N_VOCAB, (int(n),), generator=g)
    y = torch.tensor([0, 3, 5])
    return ids, lengths, y


def tiny_model(kind: str) -> nn.Module:
    torch.manual_seed(0)
    if kind == "cnn":
        m = TextCNN(N_VOCAB, EMBED, 6, filters=4, widths=(3, 4, 5), dropout=0.5)
    else:
        m = TextLSTM(N_VOCAB, EMBED, 6, units=5, layers=2, dropout=0.2)
    return m.double().eval()  # eval: dropout off, so the loss is a fixed function


def _activation_pattern(model: nn.Module):
    """ReLU signs and max-pool winners of every convolution: the CNN's linear piece."""
    captured = []
    hooks = [conv.register_forward_hook(lambda _m, _i, out: captured.append(out.detach()))
             for conv in getattr(model, "convs", [])]
    return captured, hooks


def check(kind: str, per_param: int = 6, seed: int = 0, stats: dict | None = None) -> dict[str, float]:
    """Relative error ``|g_a - g_n| / (|g_a| + |g_n|)`` over sampled weights, per tensor.

    The CNN is piecewise smooth (ReLU, max pool). A coordinate whose +-STEP
    perturbation changes the ReLU/argmax pattern straddles a kink, where a
    central difference is not a derivative estimate; such coordinates are
    skipped (counted in ``stats["skipped"]``) and sampling continues.
    """
    model = tiny_model(kind)
    ids, lengths, y = tiny_batch(seed)
    loss_fn = nn.CrossEntropyLoss()
    captured, _hooks = _activation_pattern(model)

    def loss() -> tuple[float, tuple]:
        captured.clear()
        with torch.no_grad():
            value = float(loss_fn(model(ids, lengths), y))
        pattern = tuple(((c > 0).numpy().tobytes(), torch.relu(c).argmax(dim=2).numpy().tobytes())
                        for c in captured)
        return value, pattern

    model.zero_grad()
    loss_fn(model(ids, lengths), y).backward()
    _, base_pattern = loss()
    rng = np.random.default_rng(seed)
    stats = stats if stats is not None else {}
    stats.setdefault("checked", 0)
    stats.setdefault("skipped", 0)
    errors = {}
    for name, p in model.named_parameters():
        flat = p.data.view(-1)
        grad = p.grad.view(-1)
        if name.startswith("embedding"):
            # rows that appear in the batch; others have zero gradient trivially
            used = sorted(set(ids[ids > 0].tolist()))
            candidates = [r * EMBED + c for r in used for c in range(EMBED)]
        else:
            candidates = list(range(flat.numel()))
        analytic, numeric = [], []
        for i in rng.permutation(candidates):
            if len(analytic) == per_param:
                break
            old = flat[i].item()
            flat[i] = old + STEP
            up, up_pattern = loss()
            flat[i] = old - STEP
            down, down_pattern = loss()
            flat[i] = old
            if up_pattern != base_pattern or down_pattern != base_pattern:
                stats["skipped"] += 1
                continue
            numeric.append((up - down) / (2 * STEP))
            analytic.append(grad[i].item())
        stats["checked"] += len(analytic)
        a, n = np.array(analytic), np.array(numeric)
        denom = np.linalg.norm(a) + np.linalg.norm(n)
        errors[name] = float(np.linalg.norm(a - n) / denom) if denom > 0 else 0.0
    return errors
