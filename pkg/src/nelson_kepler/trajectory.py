"""Time-stamped paths with event annotations, shared by the ODE and SDE integrators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import csvio

TRAJ_HEADER = ["t", "x", "y", "z", "u", "v"]
EVENT_HEADER = ["t", "kind"]
EVENT_KINDS = ("sigma_hit", "origin_approach", "horizon", "nonfinite")


@dataclass
class Trajectory:
    """Samples of one path.

    ``states`` has shape (N, 2) or (N, 3).  ``events`` is a list of
    ``(time, kind)``; a terminating event (anything but ``horizon``) is
    always last.  ``uv_trace`` holds Keplerian coordinates per sample for
    planar paths (NaN where the inversion is undefined) and ``noise`` the
    accumulated Brownian path B(t) when it was retained.
    """

    times: np.ndarray
    states: np.ndarray
    events: list = field(default_factory=list)
    uv_trace: np.ndarray | None = None
    noise: np.ndarray | None = None

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def terminated(self):
        """Kind of the terminating event, or None if the horizon was reached."""
        if self.events and self.events[-1][1] != "horizon":
            return self.events[-1][1]
        return None

    def _rows(self):
        n = len(self.times)
        z = self.states[:, 2] if self.dim == 3 else np.full(n, np.nan)
        if self.uv_trace is not None:
            u, v = self.uv_trace[:, 0], self.uv_trace[:, 1]
        else:
            u = v = np.full(n, np.nan)
        for i in range(n):
            yield (self.times[i], self.states[i, 0], self.states[i, 1], z[i], u[i], v[i])

    def to_csv(self, path_or_buf):
        csvio.write_csv(path_or_buf, TRAJ_HEADER, self._rows())

    def events_to_csv(self, path_or_buf):
        csvio.write_csv(path_or_buf, EVENT_HEADER, self.events)

    @classmethod
    def from_csv(cls, path_or_buf, events_path=None):
        header, data = csvio.read_csv(path_or_buf)
        if header != TRAJ_HEADER:
            raise ValueError(f"unexpected trajectory header {header}")
        planar = np.all(np.isnan(data[:, 3]))
        states = data[:, 1:3] if planar else data[:, 1:4]
        uv = data[:, 4:6]
        events = []
        if events_path is not None:
            eh, rows = csvio.read_csv(events_path, numeric=False)
            if eh != EVENT_HEADER:
                raise ValueError(f"unexpected events header {eh}")
            events = [(float(t), kind) for t, kind in rows]
        return cls(
            times=data[:, 0],
            states=states,
            events=events,
            uv_trace=None if np.all(np.isnan(uv)) else uv,
        )
