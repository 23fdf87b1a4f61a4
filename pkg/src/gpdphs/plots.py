"""SVG figures rendered from the CSVs of a run directory.

Output is a pure function of the inputs: the SVG hash salt is fixed, the
date stamp is dropped and text is emitted as paths.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

MARGIN = 0.05
SLICE_TIMES = (0.0, 1.0, 2.5, 5.0)

_RC = {
    "svg.hashsalt": "gpdphs",
    "svg.fonttype": "path",
    "path.simplify": False,
    "font.size": 8,
}


def padded_limits(values, margin=MARGIN):
    """``(lo, hi)`` enclosing finite ``values`` with a relative margin."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return -1.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    span = hi - lo
    if span == 0:
        span = abs(hi) or 1.0
    return lo - margin * span, hi + margin * span


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def trajectory_figure(path, z, times, truth, mean, samples=(), slice_times=SLICE_TIMES):
    """Deflection profiles at a few times: truth, posterior mean, samples.

    ``truth``/``mean``/each sample are ``(T, N)`` deflections on nodes ``z``.
    """
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(slice_times), figsize=(3 * len(slice_times), 2.6), sharey=True)
        axes = np.atleast_1d(axes)
        all_vals = [truth, mean, *samples]
        ylim = padded_limits(np.concatenate([a.ravel() for a in all_vals]))
        for ax, ts in zip(axes, slice_times):
            k = int(np.argmin(np.abs(times - ts)))
            for s in samples:
                ax.plot(z, s[k], color="tab:orange", lw=0.6, alpha=0.6)
            ax.plot(z, truth[k], color="k", lw=1.2, label="truth")
            ax.plot(z, mean[k], color="tab:blue", lw=1.0, ls="--", label="mean")
            ax.set_title(f"t = {times[k]:.2f}")
            ax.set_xlabel("z")
            ax.set_xlim(*padded_limits(z))
            ax.set_ylim(*ylim)
        axes[0].set_ylabel("deflection")
        axes[0].legend(loc="best", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def surface_figure(path, q, truth, learned, sd=None):
    """q-effort against strain: truth ``s(q) q``, learned mean, 95% band."""
    order = np.argsort(q, kind="stable")
    q, truth, learned = q[order], truth[order], learned[order]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4, 3))
        vals = [truth, learned]
        if sd is not None:
            sd = sd[order]
            lo, hi = learned - 1.96 * sd, learned + 1.96 * sd
            ax.fill_between(q, lo, hi, color="tab:blue", alpha=0.2, lw=0, label="95% band")
            vals += [lo, hi]
        ax.plot(q, truth, color="k", lw=1.2, label="true")
        ax.plot(q, learned, ".", color="tab:blue", ms=1.5, label="learned")
        ax.set_xlabel("q")
        ax.set_ylabel("q-effort")
        ax.set_xlim(*padded_limits(q))
        ax.set_ylim(*padded_limits(np.concatenate(vals)))
        ax.legend(loc="best", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def error_figure(path, sizes, errors, medians):
    """Per-seed errors and their median against the number of snapshots."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.plot(sizes, errors, "o", color="tab:gray", ms=3, label="per seed")
        ms = sorted(medians)
        ax.plot(ms, [medians[s] for s in ms], "-o", color="tab:blue", ms=4, label="median")
        ax.set_xlabel("snapshots")
        ax.set_ylabel("error")
        ax.set_xlim(*padded_limits(sizes))
        ax.set_ylim(*padded_limits(np.concatenate([errors, list(medians.values())])))
        ax.legend(loc="best", frameon=False)
        fig.tight_layout()
        _save(fig, path)
