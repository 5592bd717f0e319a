"""Grid maze world and the robot navigation state machine.

The robot cruises forward through corridors on its own, halts when more than
one relative direction (left/front/right) is open, and waits for a command:
0 = turn left, 1 = keep heading, 2 = turn right.  Dead ends trigger an
automatic U-turn.  "Back" is never commandable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

# headings and their (dcol, drow) deltas; row 0 is the top row
N, E, S, W = 0, 1, 2, 3
HEADING_NAMES = "NESW"
DELTAS = {N: (0, -1), E: (1, 0), S: (0, 1), W: (-1, 0)}

CMD_LEFT, CMD_FORWARD, CMD_RIGHT = 0, 1, 2


class MazeFormatError(ValueError):
    """Malformed ASCII maze."""


@dataclass(frozen=True)
class Pose:
    cell: tuple[int, int]  # (col, row)
    heading: int

    def __str__(self):
        return f"{self.cell}{HEADING_NAMES[self.heading]}"


@dataclass(frozen=True)
class SensorReading:
    front: bool
    left: bool
    right: bool

    def open_mask(self) -> int:
        """Bit 0 = left, bit 1 = front, bit 2 = right (command numbering)."""
        return (int(self.left) | (int(self.front) << 1) | (int(self.right) << 2))


class Phase(enum.Enum):
    CRUISING = "cruising"
    AT_JUNCTION = "at_junction"
    AWAITING_COMMAND = "awaiting_command"
    EXECUTING = "executing"
    DEAD_END = "dead_end"
    FINISHED = "finished"


@dataclass(frozen=True)
class RobotState:
    phase: Phase
    open_dirs: int | None = None  # AT_JUNCTION / AWAITING_COMMAND
    junction_id: int | None = None  # AWAITING_COMMAND
    command: int | None = None  # EXECUTING


@dataclass
class Maze:
    width: int
    height: int
    walls: np.ndarray  # [height, width] uint8 bitmask of OPEN directions
    start: Pose = field(default=None)  # type: ignore[assignment]
    exit: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.start is None:
            self.start = Pose((0, 0), E)
        self.walls = np.asarray(self.walls, dtype=np.uint8)
        if self.walls.shape != (self.height, self.width):
            raise ValueError("walls array shape mismatch")
        self._validate()

    def _validate(self):
        for (c, r) in (self.start.cell, self.exit):
            if not self.in_bounds(c, r):
                raise ValueError(f"cell {(c, r)} out of bounds")
        if self.start.cell == self.exit:
            raise ValueError("start and exit must differ")
        for r in range(self.height):
            for c in range(self.width):
                for h, (dc, dr) in DELTAS.items():
                    nc, nr = c + dc, r + dr
                    if not self.in_bounds(nc, nr):
                        if self.is_open(c, r, h):
                            raise ValueError(f"border edge open at {(c, r)}")
                    elif self.is_open(c, r, h) != self.is_open(nc, nr, (h + 2) % 4):
                        raise ValueError(f"asymmetric wall between {(c, r)} and {(nc, nr)}")

    def in_bounds(self, c: int, r: int) -> bool:
        return 0 <= c < self.width and 0 <= r < self.height

    def is_open(self, c: int, r: int, heading: int) -> bool:
        return bool(self.walls[r, c] & (1 << heading))

    def open_edge_count(self) -> int:
        """Number of distinct open interior edges."""
        return int(sum(bin(int(v)).count("1") for v in self.walls.ravel())) // 2


def generate_maze(width: int, height: int, seed: int) -> Maze:
    """Recursive-backtracker perfect maze; start (0,0) heading E, exit opposite."""
    if width < 2 or height < 2:
        raise ValueError("maze dimensions must be at least 2x2")
    rng = np.random.Generator(np.random.PCG64(seed))
    walls = np.zeros((height, width), dtype=np.uint8)
    visited = np.zeros((height, width), dtype=bool)
    stack = [(0, 0)]
    visited[0, 0] = True
    while stack:
        c, r = stack[-1]
        options = []
        for h, (dc, dr) in DELTAS.items():
            nc, nr = c + dc, r + dr
            if 0 <= nc < width and 0 <= nr < height and not visited[nr, nc]:
                options.append((h, nc, nr))
        if not options:
            stack.pop()
            continue
        h, nc, nr = options[rng.integers(len(options))]
        walls[r, c] |= 1 << h
        walls[nr, nc] |= 1 << ((h + 2) % 4)
        visited[nr, nc] = True
        stack.append((nc, nr))
    return Maze(
        width=width,
        height=height,
        walls=walls,
        start=Pose((0, 0), E),
        exit=(width - 1, height - 1),
    )


def render_maze(maze: Maze) -> str:
    """ASCII rendering with '+--+' walls; 'S' marks start, 'E' marks exit."""
    lines = []
    for r in range(maze.height):
        top = "+"
        for c in range(maze.width):
            top += "  +" if maze.is_open(c, r, N) else "--+"
        lines.append(top)
        mid = " " if maze.is_open(0, r, W) else "|"
        for c in range(maze.width):
            if (c, r) == maze.start.cell:
                fill = "S "
            elif (c, r) == maze.exit:
                fill = "E "
            else:
                fill = "  "
            mid += fill + ("  " if maze.is_open(c, r, E) else "| ")[0]
        lines.append(mid)
    bottom = "+"
    for c in range(maze.width):
        bottom += "  +" if maze.is_open(c, maze.height - 1, S) else "--+"
    lines.append(bottom)
    return "\n".join(lines)


def load_maze(text: str) -> Maze:
    """Parse the render_maze format back into a Maze."""
    lines = [ln.rstrip("\n") for ln in text.strip("\n").split("\n")]
    if len(lines) < 3 or len(lines) % 2 == 0:
        raise MazeFormatError("expected 2*height+1 text rows")
    height = len(lines) // 2
    first = lines[0]
    if (len(first) - 1) % 3 != 0:
        raise MazeFormatError("expected 3*width+1 columns in wall rows")
    width = (len(first) - 1) // 3
    expected_len = 3 * width + 1
    walls = np.zeros((height, width), dtype=np.uint8)
    start = None
    exit_cell = None
    for r in range(height):
        wall_row = lines[2 * r]
        cell_row = lines[2 * r + 1]
        if len(wall_row) != expected_len or len(cell_row) < expected_len - 1:
            raise MazeFormatError(f"ragged row near text line {2 * r}")
        for c in range(width):
            if wall_row[3 * c + 1 : 3 * c + 3] == "  ":
                walls[r, c] |= 1 << N
            mark = cell_row[3 * c + 1]
            if mark == "S":
                start = (c, r)
            elif mark == "E":
                exit_cell = (c, r)
            elif mark != " ":
                raise MazeFormatError(f"unexpected cell marker {mark!r}")
            if c + 1 < width and cell_row[3 * c + 3] == " ":
                walls[r, c] |= 1 << E
                walls[r, c + 1] |= 1 << W
        if r > 0:
            for c in range(width):
                if walls[r, c] & (1 << N):
                    walls[r - 1, c] |= 1 << S
    # top/bottom borders must be closed
    for c in range(width):
        if walls[0, c] & (1 << N):
            raise MazeFormatError("open border on top row")
    bottom = lines[2 * height]
    for c in range(width):
        if bottom[3 * c + 1 : 3 * c + 3] == "  ":
            raise MazeFormatError("open border on bottom row")
    if start is None or exit_cell is None:
        raise MazeFormatError("missing start or exit marker")
    try:
        return Maze(width=width, height=height, walls=walls,
                    start=Pose(start, E), exit=exit_cell)
    except ValueError as exc:
        raise MazeFormatError(str(exc)) from exc


def sense(maze: Maze, pose: Pose) -> SensorReading:
    c, r = pose.cell
    h = pose.heading
    return SensorReading(
        front=maze.is_open(c, r, h),
        left=maze.is_open(c, r, (h + 3) % 4),
        right=maze.is_open(c, r, (h + 1) % 4),
    )


def _turned(heading: int, command: int) -> int:
    return {CMD_LEFT: (heading + 3) % 4, CMD_FORWARD: heading,
            CMD_RIGHT: (heading + 1) % 4}[command]


def _advance(pose: Pose, heading: int) -> Pose:
    dc, dr = DELTAS[heading]
    return Pose((pose.cell[0] + dc, pose.cell[1] + dr), heading)


def step(state: RobotState, pose: Pose, maze: Maze,
         command: int | None = None,
         junction_id: int = 0) -> tuple[RobotState, Pose, list]:
    """One transition of the navigation state machine.

    A command must be supplied exactly when the state is AWAITING_COMMAND.
    Events are (name, payload...) tuples.
    """
    if (command is not None) != (state.phase is Phase.AWAITING_COMMAND):
        raise ValueError("command must be present iff awaiting a command")
    if state.phase is Phase.FINISHED:
        return state, pose, []
    if pose.cell == maze.exit:
        return RobotState(Phase.FINISHED), pose, [("finished",)]

    if state.phase in (Phase.CRUISING, Phase.EXECUTING):
        reading = sense(maze, pose)
        n_open = reading.front + reading.left + reading.right
        if n_open == 0:
            return RobotState(Phase.DEAD_END), pose, [("dead_end", pose.cell)]
        if n_open >= 2:
            mask = reading.open_mask()
            return (RobotState(Phase.AT_JUNCTION, open_dirs=mask), pose,
                    [("junction", pose.cell, mask)])
        cmd = (CMD_FORWARD if reading.front
               else CMD_LEFT if reading.left else CMD_RIGHT)
        new_pose = _advance(pose, _turned(pose.heading, cmd))
        return RobotState(Phase.CRUISING), new_pose, [("moved", new_pose.cell)]

    if state.phase is Phase.AT_JUNCTION:
        return (RobotState(Phase.AWAITING_COMMAND, open_dirs=state.open_dirs,
                           junction_id=junction_id), pose,
                [("awaiting", junction_id)])

    if state.phase is Phase.AWAITING_COMMAND:
        if command not in (CMD_LEFT, CMD_FORWARD, CMD_RIGHT):
            raise ValueError(f"command out of range: {command}")
        if not state.open_dirs & (1 << command):
            return state, pose, [("rejected", command)]
        heading = _turned(pose.heading, command)
        new_pose = _advance(pose, heading)
        return (RobotState(Phase.EXECUTING, command=command), new_pose,
                [("executed", command, new_pose.cell)])

    if state.phase is Phase.DEAD_END:
        flipped = replace(pose, heading=(pose.heading + 2) % 4)
        return RobotState(Phase.CRUISING), flipped, [("u_turn",)]

    raise AssertionError(f"unhandled phase {state.phase}")


class RobotSim:
    """Owns the mutable (state, pose) pair and the junction counter."""

    def __init__(self, maze: Maze):
        self.maze = maze
        self.pose = maze.start
        self.state = RobotState(Phase.CRUISING)
        self.junction_count = 0
        self.moves = 0
        self.events: list = []

    @property
    def finished(self) -> bool:
        return self.state.phase is Phase.FINISHED

    @property
    def awaiting(self) -> bool:
        return self.state.phase is Phase.AWAITING_COMMAND

    def advance(self, command: int | None = None) -> list:
        if self.state.phase is Phase.AT_JUNCTION:
            self.junction_count += 1
        state, pose, events = step(
            self.state, self.pose, self.maze, command, self.junction_count
        )
        if pose.cell != self.pose.cell:
            # safety: a move must cross an open edge
            moved_along = None
            for h, (dc, dr) in DELTAS.items():
                if (self.pose.cell[0] + dc, self.pose.cell[1] + dr) == pose.cell:
                    moved_along = h
            assert moved_along is not None
            if not self.maze.is_open(*self.pose.cell, moved_along):
                raise AssertionError("robot crossed a closed edge")
            self.moves += 1
        self.state, self.pose = state, pose
        self.events.extend(events)
        return events


def bfs_distances(maze: Maze, target: tuple[int, int]) -> np.ndarray:
    """Breadth-first distances from every cell to the target cell."""
    dist = np.full((maze.height, maze.width), -1, dtype=np.int64)
    dist[target[1], target[0]] = 0
    queue = [target]
    while queue:
        c, r = queue.pop(0)
        for h, (dc, dr) in DELTAS.items():
            nc, nr = c + dc, r + dr
            if maze.in_bounds(nc, nr) and maze.is_open(c, r, h) and dist[nr, nc] < 0:
                dist[nr, nc] = dist[r, c] + 1
                queue.append((nc, nr))
    return dist


def bfs_shortest_len(maze: Maze) -> int:
    return int(bfs_distances(maze, maze.exit)[maze.start.cell[1], maze.start.cell[0]])


def make_bfs_operator(maze: Maze):
    """Scripted operator answering each junction with the shortest-path turn."""
    dist = bfs_distances(maze, maze.exit)

    def operator(pose: Pose, open_dirs: int) -> int:
        best_cmd, best_d = None, None
        for cmd in (CMD_LEFT, CMD_FORWARD, CMD_RIGHT):
            if not open_dirs & (1 << cmd):
                continue
            nc, nr = _advance(pose, _turned(pose.heading, cmd)).cell
            d = dist[nr, nc]
            if d >= 0 and (best_d is None or d < best_d):
                best_cmd, best_d = cmd, d
        if best_cmd is None:
            raise RuntimeError("no reachable open direction at junction")
        return best_cmd

    return operator


def solve_with_oracle(maze: Maze, operator=None, step_limit: int | None = None):
    """Drive the state machine to FINISHED with a scripted operator.

    Returns the RobotSim with its trace.  Raises RuntimeError on step limit.
    """
    if operator is None:
        operator = make_bfs_operator(maze)
    if step_limit is None:
        step_limit = 8 * maze.width * maze.height
    sim = RobotSim(maze)
    for _ in range(step_limit):
        if sim.finished:
            return sim
        if sim.awaiting:
            cmd = operator(sim.pose, sim.state.open_dirs)
            sim.advance(cmd)
        else:
            sim.advance()
    if sim.finished:
        return sim
    raise RuntimeError(f"step limit {step_limit} exceeded")
