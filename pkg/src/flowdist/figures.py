"""Optional matplotlib renderings of CLI artifacts.

Imported only behind the --figures flag; every figure is written with
fixed size, fixed dpi, and stripped writer metadata so repeat runs stay
byte-identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE = {"dpi": 110, "metadata": {"Software": None}}


def _new(w=6.0, ht=4.0):
    return plt.subplots(figsize=(w, ht))


def _done(fig, ax, path, title, xlab, ylab):
    ax.set_title(title)
    ax.set_xlabel(xlab)
    ax.set_ylabel(ylab)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def distance_figure(path, lambdas, values) -> None:
    fig, ax = _new()
    ok = np.isfinite(values)
    ax.semilogx(np.asarray(lambdas)[ok], np.asarray(values)[ok], "o-")
    ax.invert_xaxis()
    _done(fig, ax, path, "distance vs lambda", "lambda", "d_lambda")


def profile_figure(path, profile) -> None:
    fig, ax = _new()
    ax.semilogx(profile.lambdas, profile.lip_values, "o-", label="lip(lambda)")
    ax.axhline(profile.lip0, ls="--", color="gray", label="lip_0")
    ax.invert_xaxis()
    ax.legend()
    _done(fig, ax, path, "directional Lipschitz profile", "lambda", "lip")


def curves_figure(path, mf) -> None:
    fig, ax = _new()
    for i in range(len(mf.params)):
        ax.plot(mf.tgrid, mf.heights[i], lw=0.8)
    _done(fig, ax, path, "curve family", "t", "x")


def density_figure(path, dens) -> None:
    fig, ax = _new()
    step = max(1, len(dens.times) // 6)
    for k in range(0, len(dens.times), step):
        ax.plot(dens.axis, dens.values[k], label=f"t={dens.times[k]:g}")
    ax.legend(fontsize=8)
    _done(fig, ax, path, "density slices", "x", "u")


def certificate_figure(path, cert) -> None:
    fig, ax = _new()
    finite = cert.integrals[np.isfinite(cert.integrals)]
    ax.hist(finite, bins=64)
    ax.axvline(cert.cap, ls="--", color="red", label="cap")
    ax.legend()
    _done(fig, ax, path, "certificate integrals", "Phi", "count")


def maximal_figure(path, f, m) -> None:
    fig, ax = _new()
    ax.plot(f.axis, np.abs(np.atleast_2d(f.values)[0]), label="|f|")
    ax.plot(m.axis, np.atleast_2d(m.values)[0], label="Mf")
    ax.legend()
    _done(fig, ax, path, "maximal function", "x", "value")


def extension_figure(path, g, values) -> None:
    fig, ax = _new()
    img = values.reshape(len(g.times), g.nspace)
    im = ax.imshow(
        img.T, origin="lower", aspect="auto",
        extent=(g.times[0], g.times[-1], g.axes[0][0], g.axes[0][-1]),
    )
    fig.colorbar(im, ax=ax)
    _done(fig, ax, path, "extended function", "t", "x")
