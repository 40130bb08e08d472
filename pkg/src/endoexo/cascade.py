"""Activation cascades: session tables, time discretization, window masks.

A cascade records, for every node of the friendship network, the minute
at which the user activated (registered), with -1 meaning the user never
activated inside the observation period. Times are discretized into
fixed-width windows; all inference operates on window indices.

Within-window convention: a user counts as an active peer only from the
window *after* its own activation window. Users that activate in the
same window do not influence each other, and the users of window 0 are
the cascade seeds whose activation is conditioned on rather than scored.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import SocialGraph

__all__ = [
    "SchemaError",
    "SessionTable",
    "Cascade",
    "SESSION_COLUMNS",
    "REFERRAL_CLASSES",
    "load_sessions",
    "write_sessions",
    "referral_labels",
    "discretize",
    "attach_sessions",
    "activity_masks",
]

SESSION_COLUMNS = (
    "user_id",
    "time_login",
    "time_share",
    "referrer_id",
    "referrer_class",
    "friend_count",
    "choice_id",
)

#: share = referral followed from another user's share (strong endogenous);
#: facebook = referral from inside the platform (potential endogenous);
#: external = referral from an outside website (strong exogenous).
REFERRAL_CLASSES = ("share", "facebook", "external", "ad", "unknown")


class SchemaError(ValueError):
    """Raised when a session CSV does not match the expected schema."""


@dataclass
class SessionTable:
    """Parsed user sessions, one row per registered user.

    All times are minutes from the dataset reference time; -1 marks
    missing values (no share, no referrer).
    """

    user_id: np.ndarray
    time_login: np.ndarray
    time_share: np.ndarray
    referrer_id: np.ndarray
    referrer_class: list[str]
    friend_count: np.ndarray
    choice_id: np.ndarray

    def __post_init__(self):
        n = len(self.user_id)
        for name in ("time_login", "time_share", "referrer_id",
                     "friend_count", "choice_id"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} length mismatch")
        if len(self.referrer_class) != n:
            raise ValueError("column referrer_class length mismatch")
        if len(np.unique(self.user_id)) != n:
            raise SchemaError("duplicate user_id in session table")
        if n and self.time_login.min() < 0:
            raise SchemaError("time_login must be >= 0")

    def __len__(self) -> int:
        return len(self.user_id)


@dataclass(frozen=True)
class Cascade:
    """Per-user activation times discretized into fixed-width windows.

    Attributes
    ----------
    activation_time : ndarray of float
        Minutes from reference per user; -1 for users that never
        activated within the observation period.
    window_width : float
        Window width in minutes.
    horizon : int
        Number of windows T; every finite activation time falls in
        ``[0, horizon * window_width)``.
    windows : ndarray of int
        Activation window per user (``floor(time / width)``); -1 for
        never-activated users.
    """

    activation_time: np.ndarray
    window_width: float
    horizon: int
    windows: np.ndarray = field(init=False)

    def __post_init__(self):
        t = np.asarray(self.activation_time, dtype=np.float64)
        finite = t >= 0
        if self.window_width <= 0:
            raise ValueError("window_width must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        w = np.full(t.shape, -1, dtype=np.int64)
        w[finite] = np.floor(t[finite] / self.window_width).astype(np.int64)
        if finite.any() and (w[finite].max() >= self.horizon or w[finite].min() < 0):
            raise ValueError("activation times exceed the horizon")
        object.__setattr__(self, "activation_time", t)
        object.__setattr__(self, "windows", w)

    @property
    def n_users(self) -> int:
        return self.windows.size

    @property
    def activated(self) -> np.ndarray:
        """Mask of users with a finite activation time."""
        return self.windows >= 0

    def n_activated_in(self, t: int) -> int:
        return int(np.count_nonzero(self.windows == t))


def load_sessions(path) -> SessionTable:
    """Read a session CSV.

    Accepts the full seven-column schema or the minimal two-column
    ``user_id,time_login`` variant (missing columns filled with -1 /
    ``unknown``).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a CSV header")
        header = [h.strip() for h in header]
        if header == list(SESSION_COLUMNS):
            minimal = False
        elif header == ["user_id", "time_login"]:
            minimal = True
        else:
            missing = [c for c in SESSION_COLUMNS if c not in header]
            raise SchemaError(
                f"{path}: header {header!r} does not match expected columns; "
                f"missing {missing!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            want = 2 if minimal else 7
            if len(row) != want:
                raise SchemaError(
                    f"{path}:{lineno}: expected {want} fields, got {len(row)}")
            rows.append((lineno, row))

    def _int(value, lineno, col):
        try:
            return int(value)
        except ValueError:
            raise SchemaError(
                f"{path}:{lineno}: non-numeric {col} value {value!r}")

    user_id, time_login, time_share = [], [], []
    referrer_id, referrer_class, friend_count, choice_id = [], [], [], []
    for lineno, row in rows:
        user_id.append(_int(row[0], lineno, "user_id"))
        time_login.append(_int(row[1], lineno, "time_login"))
        if minimal:
            time_share.append(-1)
            referrer_id.append(-1)
            referrer_class.append("unknown")
            friend_count.append(0)
            choice_id.append(-1)
        else:
            time_share.append(_int(row[2], lineno, "time_share"))
            referrer_id.append(_int(row[3], lineno, "referrer_id"))
            referrer_class.append(row[4].strip())
            friend_count.append(_int(row[5], lineno, "friend_count"))
            choice_id.append(_int(row[6], lineno, "choice_id"))

    return SessionTable(
        user_id=np.asarray(user_id, dtype=np.int64),
        time_login=np.asarray(time_login, dtype=np.int64),
        time_share=np.asarray(time_share, dtype=np.int64),
        referrer_id=np.asarray(referrer_id, dtype=np.int64),
        referrer_class=referrer_class,
        friend_count=np.asarray(friend_count, dtype=np.int64),
        choice_id=np.asarray(choice_id, dtype=np.int64),
    )


def write_sessions(sessions: SessionTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SESSION_COLUMNS)
        for k in range(len(sessions)):
            writer.writerow([
                sessions.user_id[k],
                sessions.time_login[k],
                sessions.time_share[k],
                sessions.referrer_id[k],
                sessions.referrer_class[k],
                sessions.friend_count[k],
                sessions.choice_id[k],
            ])


def referral_labels(sessions: SessionTable) -> list[str]:
    """Classify each session into one of REFERRAL_CLASSES.

    Following a share (``referrer_id`` set, or class literally
    ``share``) is the strongest endogenous signal; a plain ``facebook``
    referral is only potentially endogenous; any named outside website
    maps to ``external``.
    """
    labels = []
    for k in range(len(sessions)):
        cls = sessions.referrer_class[k].strip().lower()
        if sessions.referrer_id[k] >= 0 or cls == "share":
            labels.append("share")
        elif cls == "facebook":
            labels.append("facebook")
        elif cls in ("ad", "ads", "advertisement"):
            labels.append("ad")
        elif cls in ("", "unknown", "none", "-1"):
            labels.append("unknown")
        else:
            labels.append("external")
    return labels


def discretize(sessions: SessionTable, window_width: float,
               n_users: int | None = None) -> Cascade:
    """Discretize login times into windows of ``window_width`` minutes.

    The horizon is ``ceil((max login + 1) / width)`` so the latest login
    falls inside the last window. Users are indexed by ``user_id``;
    ids absent from the table become never-activated (-1).
    """
    if window_width <= 0:
        raise ValueError("window_width must be positive")
    if n_users is None:
        n_users = int(sessions.user_id.max()) + 1 if len(sessions) else 0
    times = np.full(n_users, -1.0)
    times[sessions.user_id] = sessions.time_login
    if len(sessions):
        horizon = int(math.ceil((sessions.time_login.max() + 1) / window_width))
    else:
        horizon = 1
    return Cascade(times, window_width, max(horizon, 1))


def attach_sessions(g: SocialGraph, sessions: SessionTable,
                    window_width: float) -> tuple[SocialGraph, Cascade]:
    """Align a session table with a graph and sort nodes by activation time.

    Session user ids are matched against the graph's external ids;
    session users without any recorded friendship become isolated
    nodes. Graph nodes without a session never activated. The returned
    graph's internal order is (activation window, external id), never
    last, which keeps the users of any window range contiguous.
    """
    known = g.id_map
    extra = np.asarray(
        [u for u in sessions.user_id if int(u) not in known], dtype=np.int64)
    g2 = g.with_isolated(extra)
    idx_of = g2.id_map
    times = np.full(g2.n_nodes, -1.0)
    for k in range(len(sessions)):
        times[idx_of[int(sessions.user_id[k])]] = sessions.time_login[k]
    if len(sessions):
        horizon = int(math.ceil((sessions.time_login.max() + 1) / window_width))
    else:
        horizon = 1
    cascade = Cascade(times, window_width, max(horizon, 1))
    sort_key = np.where(cascade.windows >= 0, cascade.windows,
                        np.iinfo(np.int64).max)
    perm = np.lexsort((g2.ext_ids, sort_key))
    g3 = g2.reordered(perm)
    cascade = Cascade(times[perm], window_width, cascade.horizon)
    return g3, cascade


def activity_masks(c: Cascade, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Partition users at window ``t`` into (active_before, activated_in, inactive).

    ``active_before`` holds users activated strictly before ``t`` (the
    peers that can exert influence during window ``t``), ``activated_in``
    the users activating during ``t``, and ``inactive`` everyone later or
    never.
    """
    if not 0 <= t < c.horizon:
        raise ValueError(f"window {t} outside [0, {c.horizon})")
    activated = c.windows >= 0
    active_before = activated & (c.windows < t)
    activated_in = c.windows == t
    inactive = ~(active_before | activated_in)
    return active_before, activated_in, inactive
