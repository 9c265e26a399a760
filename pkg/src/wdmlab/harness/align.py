"""Score functions for the inter-lane time-alignment search.

Both evaluators take ``(lanes_a, shifted_b)`` and return a score that is
lowest when lane set B is correctly aligned with lane set A.

``XpmSurrogate`` is cheap: it regresses the nonlinear phase error of A on
lagged intensities and reports the residual error power. A neighbour's
cross-phase kernel is one-sided (the neighbour walks through A in one
direction only) and steepest at zero lag, so each B lane gets a one-sided lag
window whose direction is set by ``directions``. With one neighbour on each
side the two windows only both contain their kernel's edge at the true
offset, which gives a cusp-shaped minimum; the long windows keep a
half-depth shoulder wide enough for a coarse grid to land on.

``JointRnnEvaluator`` trains a small bi-VRNN on A and B together and
returns the BER of A, which is the expensive but model-faithful score.
"""

from __future__ import annotations

import numpy as np

from ..analysis import ber_count
from ..rnn import BiVrnnModel, TrainConfig, WindowSpec, infer_symbols, make_windows, train
from ..sigkit import Constellation


def _intensity_lags(lane, lags):
    p = np.abs(lane) ** 2
    p = p - p.mean()
    # column for lag k holds p[t + k]
    return np.stack([np.roll(p, -k) for k in lags], axis=1)


class XpmSurrogate:
    """Linear nonlinear-phase model of lane set A.

    Parameters
    ----------
    ref_a : complex ndarray (lanes_a, n)
        Transmitted symbols of A (the training reference).
    directions : sequence of {+1, -1}
        One entry per B lane: +1 uses B intensities at ``t .. t+window``
        (lags into the future), -1 uses ``t-window .. t``.
    window : int
        One-sided lag span for B lanes; A's own intensities use ``+-own_window``.
    train, test : slice
        Fit and scoring segments along the symbol axis.
    """

    ridge = 1e-9

    def __init__(self, ref_a, directions, window=75, own_window=20,
                 train=None, test=None):
        self.ref = np.atleast_2d(ref_a)
        self.directions = list(directions)
        self.window = window
        self.own_window = own_window
        n = self.ref.shape[-1]
        self.train = train if train is not None else slice(0, n // 2)
        self.test = test if test is not None else slice(n // 2, n)

    def design(self, lanes_a, lanes_b):
        cols = []
        own = range(-self.own_window, self.own_window + 1)
        for lane in np.atleast_2d(lanes_a):
            cols.append(_intensity_lags(lane, own))
        b = np.atleast_2d(lanes_b)
        if b.shape[0] != len(self.directions):
            raise ValueError(f"expected {len(self.directions)} B lanes, got {b.shape[0]}")
        for lane, d in zip(b, self.directions):
            lags = range(0, self.window + 1) if d > 0 else range(-self.window, 1)
            cols.append(_intensity_lags(lane, lags))
        a = np.hstack(cols)
        return np.hstack([a, np.ones((a.shape[0], 1))])

    def phase_fit(self, lanes_a, lanes_b):
        """A with the fitted nonlinear phase removed from every lane."""
        rx = np.atleast_2d(lanes_a)
        a = self.design(rx, lanes_b)
        at = a[self.train]
        gram = at.T @ at
        gram[np.diag_indices_from(gram)] += self.ridge * np.trace(gram) / gram.shape[0]
        ph = np.angle(rx * np.conj(self.ref))
        w = np.linalg.solve(gram, at.T @ ph[:, self.train].T)
        return rx * np.exp(-1j * (a @ w).T)

    def __call__(self, lanes_a, lanes_b) -> float:
        out = self.phase_fit(lanes_a, lanes_b)
        d = out[:, self.test] - self.ref[:, self.test]
        return float(np.mean(np.abs(d) ** 2) / np.mean(np.abs(self.ref[:, self.test]) ** 2))


class JointRnnEvaluator:
    """Train a joint bi-VRNN on lanes A + B and return the test BER of A.

    ``ref_a`` holds the transmitted symbols of A; the B lanes are inputs
    only (the model outputs A's lanes).
    """

    def __init__(self, ref_a, constellation: Constellation, H=8, spec=WindowSpec(51, 5),
                 epochs=20, batch_words=16, lr=3e-3, seed=0, train=None, test=None):
        self.ref = np.atleast_2d(ref_a)
        self.const = constellation
        self.H, self.spec = H, spec
        self.cfg = TrainConfig(batch_words, epochs, lr, seed=seed)
        n = self.ref.shape[-1]
        self.train = train if train is not None else slice(0, n // 2)
        self.test = test if test is not None else slice(n // 2, n)
        self.seed = seed

    def __call__(self, lanes_a, lanes_b) -> float:
        x = np.vstack([np.atleast_2d(lanes_a), np.atleast_2d(lanes_b)])
        tr = make_windows(x[:, self.train], self.spec, self.ref[:, self.train])
        te = make_windows(x[:, self.test], self.spec, self.ref[:, self.test])
        F, y = 2 * x.shape[0], 2 * self.ref.shape[0]
        model = BiVrnnModel.init(self.H, F, y, self.spec.length, seed=self.seed)
        best, _ = train(model, tr, self.cfg)
        out = infer_symbols(best, te)
        ref = self.ref[:, self.test][:, te.centers]
        return ber_count(out, ref, self.const).ber
