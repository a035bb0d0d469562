"""Frame-to-state assignment within a phone occurrence.

The default is deterministic uniform segmentation; dtw_align offers an
optional template-based refinement pass.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError


@dataclass(frozen=True, order=True)
class SoundId:
    """The modelling unit: a (phone, state) pair."""

    phone: str
    state: int

    def __str__(self):
        return f"{self.phone}:{self.state}"

    @classmethod
    def parse(cls, text):
        phone, _, state = text.rpartition(":")
        return cls(phone, int(state))


def segment_uniform(frame_count, n_states):
    """Split frames into n_states contiguous runs, lengths differing by at
    most one with the longer runs first."""
    if n_states < 1:
        raise AlignmentError(f"n_states must be >= 1, got {n_states}")
    if frame_count < n_states:
        raise AlignmentError(
            f"cannot place {n_states} states into {frame_count} frames"
        )
    base, extra = divmod(frame_count, n_states)
    labels = []
    for state in range(n_states):
        run = base + (1 if state < extra else 0)
        labels.extend([state] * run)
    return labels


def dtw_align(frames, templates):
    """Minimum-cost monotone warping of frames onto templates.

    Cost is summed squared Euclidean distance; allowed steps advance the
    frame, the template, or both. Ties prefer the diagonal step, then the
    template-advancing step. Returns (path, total_cost) with the path a
    list of (frame_index, template_index) pairs anchored at both corners.
    """
    frames = [np.asarray(f, dtype=float) for f in frames]
    templates = [np.asarray(t, dtype=float) for t in templates]
    if not frames or not templates:
        raise AlignmentError("dtw_align needs non-empty frame and template sequences")
    n, m = len(frames), len(templates)
    local = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            d = frames[i] - templates[j]
            local[i, j] = d @ d
    acc = np.full((n, m), np.inf)
    acc[0, 0] = local[0, 0]
    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                continue
            best = np.inf
            if i > 0 and j > 0:
                best = acc[i - 1, j - 1]
            if j > 0:
                best = min(best, acc[i, j - 1])
            if i > 0:
                best = min(best, acc[i - 1, j])
            acc[i, j] = local[i, j] + best
    # traceback, tie order: diagonal, template-advancing, frame-advancing
    path = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while i > 0 or j > 0:
        if i > 0 and j > 0 and acc[i - 1, j - 1] <= min(acc[i, j - 1], acc[i - 1, j]):
            i, j = i - 1, j - 1
        elif j > 0 and (i == 0 or acc[i, j - 1] <= acc[i - 1, j]):
            j = j - 1
        else:
            i = i - 1
        path.append((i, j))
    path.reverse()
    return path, float(acc[n - 1, m - 1])
