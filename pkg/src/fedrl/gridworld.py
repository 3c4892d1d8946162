"""Grid maze environments with one-step SONAR observations.

A maze is a small grid of four cell kinds: hell cells end the episode with
reward -1 (stepping off the grid counts as hell), the goal cell pays +1, and
moves onto free/source cells pay +0.1 or -0.1 depending on whether the
Manhattan distance to the nearest goal shrank. The agent never observes its
coordinates; it sees only the kinds of the four neighboring cells
(up, down, right, left), each coded -1 (hell/boundary), 0 (free/source) or
+1 (goal). The 4-tuple has 3^4 = 81 combinations, indexed in base 3.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

N_SONAR_STATES = 81
N_ACTIONS = 4
DEFAULT_STEP_LIMIT = 100

ACTION_NAMES = ("up", "down", "right", "left")
# row/col displacement per action; order matches the SONAR slot order
ACTION_DELTAS = ((-1, 0), (1, 0), (0, 1), (0, -1))

REWARD_HELL = -1.0
REWARD_GOAL = 1.0
REWARD_CLOSER = 0.1
REWARD_FARTHER = -0.1


class CellKind(IntEnum):
    HELL = 0
    GOAL = 1
    SOURCE = 2
    FREE = 3


CELL_CHARS = {CellKind.HELL: "H", CellKind.GOAL: "G", CellKind.SOURCE: "S", CellKind.FREE: "."}
CHAR_CELLS = {ch: kind for kind, ch in CELL_CHARS.items()}


class TerminalKind(Enum):
    REACHED_GOAL = "reached_goal"
    HIT_HELL = "hit_hell"
    STEP_LIMIT = "step_limit"
    NONE = "none"


class MazeGenerationError(RuntimeError):
    """No solvable maze found within the retry budget."""


@dataclass(frozen=True)
class SonarState:
    """One-step SONAR observation: neighbor kinds in {-1, 0, +1} per direction."""

    up: int
    down: int
    right: int
    left: int
    index: int

    @classmethod
    def from_neighbors(cls, up: int, down: int, right: int, left: int) -> "SonarState":
        for v in (up, down, right, left):
            if v not in (-1, 0, 1):
                raise ValueError(f"neighbor code must be in {{-1,0,1}}, got {v}")
        index = 27 * (up + 1) + 9 * (down + 1) + 3 * (right + 1) + (left + 1)
        return cls(up, down, right, left, index)

    @classmethod
    def from_index(cls, index: int) -> "SonarState":
        if not 0 <= index < N_SONAR_STATES:
            raise ValueError(f"state index out of range: {index}")
        digits = []
        rem = index
        for base in (27, 9, 3, 1):
            digits.append(rem // base - 1)
            rem %= base
        return cls(digits[0], digits[1], digits[2], digits[3], index)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.up, self.down, self.right, self.left)


@dataclass
class StepOutcome:
    next_state: SonarState | None
    reward: float
    terminal: bool
    terminal_kind: TerminalKind


@dataclass(eq=False)
class Maze:
    """Immutable maze grid; derived lookup tables are built once at construction.

    `sonar_index[r, c]` holds the SONAR state index of every non-hell cell and
    -1 elsewhere; `goal_dist[r, c]` the Manhattan distance to the nearest goal.
    """

    width: int
    height: int
    cells: np.ndarray  # (height, width) of CellKind values
    id: int = 0
    source: tuple[int, int] = field(init=False)
    goals: tuple[tuple[int, int], ...] = field(init=False)
    goal_dist: np.ndarray = field(init=False)
    sonar_index: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.cells = np.asarray(self.cells, dtype=np.int8)
        if self.cells.shape != (self.height, self.width):
            raise ValueError(
                f"cells shape {self.cells.shape} does not match {self.height}x{self.width}"
            )
        sources = list(zip(*np.nonzero(self.cells == CellKind.SOURCE)))
        goals = list(zip(*np.nonzero(self.cells == CellKind.GOAL)))
        if len(sources) != 1:
            raise ValueError(f"maze must have exactly one source cell, found {len(sources)}")
        if not goals:
            raise ValueError("maze must have at least one goal cell")
        self.source = (int(sources[0][0]), int(sources[0][1]))
        self.goals = tuple((int(r), int(c)) for r, c in goals)
        self.goal_dist = _manhattan_goal_distance(self.height, self.width, self.goals)
        self.sonar_index = _sonar_table(self.cells)

    def in_bounds(self, r: int, c: int) -> bool:
        return 0 <= r < self.height and 0 <= c < self.width

    def kind_at(self, r: int, c: int) -> CellKind:
        return CellKind(self.cells[r, c])


def _manhattan_goal_distance(
    height: int, width: int, goals: tuple[tuple[int, int], ...]
) -> np.ndarray:
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    dist = np.full((height, width), np.iinfo(np.int32).max, dtype=np.int32)
    for gr, gc in goals:
        dist = np.minimum(dist, np.abs(rows - gr) + np.abs(cols - gc))
    return dist


def _neighbor_code(cells: np.ndarray, r: int, c: int) -> int:
    h, w = cells.shape
    if not (0 <= r < h and 0 <= c < w):
        return -1  # boundary encoded as hell
    kind = cells[r, c]
    if kind == CellKind.HELL:
        return -1
    if kind == CellKind.GOAL:
        return 1
    return 0


def _sonar_table(cells: np.ndarray) -> np.ndarray:
    h, w = cells.shape
    table = np.full((h, w), -1, dtype=np.int16)
    for r in range(h):
        for c in range(w):
            if cells[r, c] == CellKind.HELL:
                continue
            codes = [_neighbor_code(cells, r + dr, c + dc) for dr, dc in ACTION_DELTAS]
            table[r, c] = (
                27 * (codes[0] + 1) + 9 * (codes[1] + 1) + 3 * (codes[2] + 1) + (codes[3] + 1)
            )
    return table


def encode_state(maze: Maze, position: tuple[int, int]) -> SonarState:
    """SONAR observation at `position`; the position itself must be traversable."""
    r, c = position
    if not maze.in_bounds(r, c):
        raise ValueError(f"position {position} outside {maze.height}x{maze.width} maze")
    if maze.cells[r, c] == CellKind.HELL:
        raise ValueError(f"position {position} is a hell cell")
    codes = [_neighbor_code(maze.cells, r + dr, c + dc) for dr, dc in ACTION_DELTAS]
    return SonarState.from_neighbors(*codes)


def step(
    maze: Maze, position: tuple[int, int], action: int
) -> tuple[StepOutcome, tuple[int, int]]:
    """Apply one deterministic move; returns the outcome and the new position.

    Moving into hell or off the grid terminates with reward -1 (the returned
    position is the unchanged pre-move position). Moving onto the goal
    terminates with +1. Any other move pays +0.1 if the Manhattan distance to
    the nearest goal strictly decreased, else -0.1. Step-limit truncation is
    the episode runner's job, not this function's.
    """
    r, c = position
    if not maze.in_bounds(r, c) or maze.cells[r, c] == CellKind.HELL:
        raise ValueError(f"invalid current position {position}")
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"invalid action {action}")
    dr, dc = ACTION_DELTAS[action]
    nr, nc = r + dr, c + dc
    if not maze.in_bounds(nr, nc) or maze.cells[nr, nc] == CellKind.HELL:
        return StepOutcome(None, REWARD_HELL, True, TerminalKind.HIT_HELL), (r, c)
    if maze.cells[nr, nc] == CellKind.GOAL:
        return (
            StepOutcome(encode_state(maze, (nr, nc)), REWARD_GOAL, True, TerminalKind.REACHED_GOAL),
            (nr, nc),
        )
    closer = maze.goal_dist[nr, nc] < maze.goal_dist[r, c]
    reward = REWARD_CLOSER if closer else REWARD_FARTHER
    return StepOutcome(encode_state(maze, (nr, nc)), reward, False, TerminalKind.NONE), (nr, nc)


def is_solvable(maze: Maze) -> bool:
    """Breadth-first search from the source over free cells until a goal is adjacent."""
    seen = {maze.source}
    queue = deque([maze.source])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ACTION_DELTAS:
            nr, nc = r + dr, c + dc
            if not maze.in_bounds(nr, nc) or (nr, nc) in seen:
                continue
            kind = maze.cells[nr, nc]
            if kind == CellKind.GOAL:
                return True
            if kind == CellKind.HELL:
                continue
            seen.add((nr, nc))
            queue.append((nr, nc))
    return False


def _corner_region(extent: int) -> int:
    return max(1, round(0.3 * extent))


def generate_maze(
    seed: int,
    width: int = 10,
    height: int = 10,
    hell_density: float = 0.12,
    env_id: int = 0,
    max_tries: int = 200,
) -> Maze:
    """Seeded random maze: one source (top-left region), one goal (bottom-right
    region), hell cells at `hell_density`, and a verified source-to-goal path.

    Source/goal corners are fixed across seeds so that a set of generated mazes
    forms positively correlated tasks, the regime the federation is meant for.
    The cells adjacent to source and goal stay hell-free so every maze has
    clean start/approach corridors rather than luck-of-the-draw choke points.
    """
    if not 0.0 <= hell_density <= 0.4:
        raise ValueError(f"hell_density must be in [0, 0.4], got {hell_density}")
    if width < 1 or height < 1 or width * height < 2:
        raise ValueError("maze must have at least two cells")
    rng = np.random.default_rng(seed)
    rh, rw = _corner_region(height), _corner_region(width)
    n_hell = round(hell_density * width * height)
    for _ in range(max_tries):
        sr = int(rng.integers(0, rh))
        sc = int(rng.integers(0, rw))
        gr = int(rng.integers(height - rh, height))
        gc = int(rng.integers(width - rw, width))
        if (sr, sc) == (gr, gc):
            continue
        cells = np.full((height, width), CellKind.FREE, dtype=np.int8)
        cells[sr, sc] = CellKind.SOURCE
        cells[gr, gc] = CellKind.GOAL

        def shielded(r: int, c: int) -> bool:
            return (max(abs(r - sr), abs(c - sc)) <= 1) or (max(abs(r - gr), abs(c - gc)) <= 1)

        candidates = [
            (r, c) for r in range(height) for c in range(width) if not shielded(r, c)
        ]
        if n_hell > len(candidates):
            continue
        picks = rng.choice(len(candidates), size=n_hell, replace=False)
        for idx in picks:
            cells[candidates[int(idx)]] = CellKind.HELL
        maze = Maze(width, height, cells, id=env_id)
        if is_solvable(maze):
            return maze
    raise MazeGenerationError(
        f"no solvable {width}x{height} maze at density {hell_density} after {max_tries} tries"
    )


def maze_to_text(maze: Maze) -> str:
    lines = [f"{maze.width} {maze.height}"]
    for r in range(maze.height):
        lines.append("".join(CELL_CHARS[CellKind(maze.cells[r, c])] for c in range(maze.width)))
    return "\n".join(lines) + "\n"


def maze_from_text(text: str, env_id: int = 0) -> Maze:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty maze file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"expected 'width height' header, got {lines[0]!r}")
    width, height = int(header[0]), int(header[1])
    rows = lines[1:]
    if len(rows) != height:
        raise ValueError(f"expected {height} rows, got {len(rows)}")
    cells = np.empty((height, width), dtype=np.int8)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"row {r} has length {len(row)}, expected {width}")
        for c, ch in enumerate(row):
            if ch not in CHAR_CELLS:
                raise ValueError(f"unknown cell character {ch!r} at row {r}, col {c}")
            cells[r, c] = CHAR_CELLS[ch]
    maze = Maze(width, height, cells, id=env_id)
    if not is_solvable(maze):
        raise ValueError("goal not reachable from source through free cells")
    return maze


def load_maze_file(path: str | Path, env_id: int = 0) -> Maze:
    return maze_from_text(Path(path).read_text(), env_id=env_id)


def save_maze_file(maze: Maze, path: str | Path) -> None:
    Path(path).write_text(maze_to_text(maze))
