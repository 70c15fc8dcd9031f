"""Optional PNG rendering of benchmark tables (requires matplotlib)."""
from __future__ import annotations

from collections import defaultdict


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("plotting needs matplotlib (pip install ncmsg[plot])") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_convergence(rows, path):
    """Cost and gradient norm versus iteration, one curve per (label, optimizer, seed)."""
    plt = _pyplot()
    curves = defaultdict(list)
    for label, optimizer, seed, k, cost, grad, _step, _status in rows:
        curves[(label, optimizer, seed)].append((k, cost, grad))
    fig, (ax_cost, ax_grad) = plt.subplots(1, 2, figsize=(10, 4))
    for (label, optimizer, seed), pts in sorted(curves.items(), key=lambda kv: str(kv[0])):
        ks = [q[0] for q in pts]
        costs = [q[1] for q in pts]
        ax_cost.plot(ks, [c - min(costs) + 1e-16 for c in costs], lw=1,
                     label=f"{label} {optimizer} s{seed}")
        ax_grad.plot(ks, [q[2] for q in pts], lw=1)
    ax_cost.set(xscale="log", yscale="log", xlabel="iteration", ylabel="cost - min cost")
    ax_grad.set(xscale="log", yscale="log", xlabel="iteration", ylabel="gradient norm")
    ax_cost.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_mse(rows, path):
    """Location and scatter MSE versus n on log-log axes."""
    plt = _pyplot()
    by_method = defaultdict(list)
    for method, n, mse_mu, mse_sigma, _failures in rows:
        by_method[method].append((n, mse_mu, mse_sigma))
    fig, (ax_mu, ax_sigma) = plt.subplots(1, 2, figsize=(10, 4))
    for method, pts in by_method.items():
        pts.sort()
        ns = [q[0] for q in pts]
        if method != "tyler-known-location":
            ax_mu.plot(ns, [q[1] for q in pts], marker="o", label=method)
        ax_sigma.plot(ns, [q[2] for q in pts], marker="o", label=method)
    ax_mu.set(xscale="log", yscale="log", xlabel="n", ylabel="MSE location")
    ax_sigma.set(xscale="log", yscale="log", xlabel="n", ylabel="MSE scatter")
    ax_sigma.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_robustness(rows, path):
    """F1-weighted versus transform parameter ``t``, one curve per classifier."""
    plt = _pyplot()
    by_clf = defaultdict(list)
    for name, mode, t, f1 in rows:
        by_clf[name].append((t, f1))
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, pts in by_clf.items():
        pts.sort()
        ax.plot([q[0] for q in pts], [q[1] for q in pts], marker="o", label=name)
    ax.set(xlabel="t", ylabel="F1 weighted", ylim=(0, 1.02), title=rows[0][1] if rows else "")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
