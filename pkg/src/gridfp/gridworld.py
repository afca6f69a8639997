"""Deterministic egocentric grid-world scenarios.

Four built-in scenarios mirror a difficulty ladder: G1 (kit gathering in a
room), G2 (kits and poison in a maze), G3 (armed defense in a simple arena),
G4 (the same in a larger maze). The agent has a 4-way facing and sees a
rotated (2r+1)^2 window of one-hot channels: six structural channels (wall,
kit, poison, monster, projectile, ammo) plus A appearance channels driven by
a per-episode palette, the analog of texture randomization.

Dynamics are fully deterministic given the reset rng and the action
sequence. Step order within a frame: decode/cancel sub-actions, turn, move
(pickups on every cell entered), shoot, projectile advance, monster tick
(melee or approach, then fire), health decay, due respawns.

Maps load from a plain-text format, one character per cell:
``#`` wall, ``.`` floor, ``K``/``P``/``M``/``A`` kit/poison/monster/ammo
spawn cells, ``S`` agent spawn region (any floor cell if absent).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

# structural channel indices
CH_WALL, CH_KIT, CH_POISON, CH_MONSTER, CH_PROJECTILE, CH_AMMO = range(6)
N_STRUCT_CHANNELS = 6

# cell kinds, in palette order
KIND_WALL, KIND_FLOOR, KIND_KIT, KIND_POISON, KIND_MONSTER, KIND_PROJECTILE, KIND_AMMO = range(7)
N_KINDS = 7

_ENTITY_KIND_TO_CHANNEL = {
    KIND_KIT: CH_KIT,
    KIND_POISON: CH_POISON,
    KIND_MONSTER: CH_MONSTER,
    KIND_PROJECTILE: CH_PROJECTILE,
    KIND_AMMO: CH_AMMO,
}

# facing: 0=N, 1=E, 2=S, 3=W; rot90(window, k=facing) turns facing to "up"
DIRS = ((-1, 0), (0, 1), (1, 0), (0, -1))

SUB_ACTIONS_MOVE = ("forward", "turn_left", "turn_right")
SUB_ACTIONS_BATTLE = ("forward", "backward", "turn_left", "turn_right", "shoot")
KNOWN_SUB_ACTIONS = ("forward", "backward", "turn_left", "turn_right", "shoot",
                     "strafe_left", "strafe_right", "run")

_PALETTE_SEED = 0x9E1D


@dataclass(frozen=True)
class MapData:
    walls: np.ndarray  # (H, W) bool
    spawns: dict[int, tuple[tuple[int, int], ...]]  # kind -> cells
    agent_spawns: tuple[tuple[int, int], ...]

    @property
    def shape(self) -> tuple[int, int]:
        return self.walls.shape


_CHAR_KINDS = {"K": KIND_KIT, "P": KIND_POISON, "M": KIND_MONSTER, "A": KIND_AMMO}


def parse_map(text: str) -> MapData:
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty map")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("ragged map: all rows must have equal length")
    h = len(rows)
    walls = np.zeros((h, width), dtype=bool)
    spawns: dict[int, list[tuple[int, int]]] = {k: [] for k in _ENTITY_KIND_TO_CHANNEL}
    agent_spawns: list[tuple[int, int]] = []
    floor: list[tuple[int, int]] = []
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            if ch == "#":
                walls[y, x] = True
            elif ch == ".":
                floor.append((y, x))
            elif ch == "S":
                floor.append((y, x))
                agent_spawns.append((y, x))
            elif ch in _CHAR_KINDS:
                floor.append((y, x))
                spawns[_CHAR_KINDS[ch]].append((y, x))
            else:
                raise ValueError(f"unknown map character {ch!r} at row {y}, column {x}")
    if not (walls[0].all() and walls[-1].all() and walls[:, 0].all() and walls[:, -1].all()):
        raise ValueError("map must be fully enclosed by walls")
    return MapData(
        walls=walls,
        spawns={k: tuple(v) for k, v in spawns.items()},
        agent_spawns=tuple(agent_spawns) if agent_spawns else tuple(floor),
    )


def load_map(path: str | Path) -> MapData:
    return parse_map(Path(path).read_text(encoding="utf-8"))


def builtin_map_text(name: str) -> str:
    return (resources.files("gridfp") / "maps" / f"{name.lower()}.txt").read_text(encoding="utf-8")


def palette_codes(palette_id: int, appearance_channels: int) -> np.ndarray:
    """Injective map from the 7 cell kinds to appearance channel codes."""
    if appearance_channels < N_KINDS:
        raise ValueError(f"need at least {N_KINDS} appearance channels, got {appearance_channels}")
    rng = np.random.default_rng(np.random.SeedSequence([_PALETTE_SEED, int(palette_id)]))
    return rng.permutation(appearance_channels)[:N_KINDS].astype(np.int64)


def make_appearance_split(n_palettes: int, train_fraction: float,
                          rng: np.random.Generator) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Disjoint train/test palette id sets (defaults elsewhere: 100 palettes, 90/10)."""
    if n_palettes < 2:
        raise ValueError(f"need at least 2 palettes to split, got {n_palettes}")
    n_train = int(round(n_palettes * train_fraction))
    if n_train < 1 or n_train >= n_palettes:
        raise ValueError(f"train_fraction {train_fraction} leaves an empty split for {n_palettes} palettes")
    perm = rng.permutation(n_palettes)
    return tuple(sorted(int(i) for i in perm[:n_train])), tuple(sorted(int(i) for i in perm[n_train:]))


@dataclass(frozen=True)
class GridWorldConfig:
    scenario: str
    map_text: str
    episode_cap: int = 256
    view_radius: int = 7
    sub_actions: tuple[str, ...] = SUB_ACTIONS_MOVE
    measurements: tuple[str, ...] = ("health",)
    appearance_channels: int = 12
    palette_ids: tuple[int, ...] = (0,)
    frame_skip: int = 1
    start_health: int = 100
    start_ammo: int = 15
    health_decay: int = 1
    kit_heal: int = 25
    poison_damage: int = 30
    ammo_pickup: int = 5
    kit_count: int = 0
    poison_count: int = 0
    monster_count: int = 0
    ammo_count: int = 0
    kit_respawn: int = 30
    poison_respawn: int = 30
    monster_respawn: int = 20
    ammo_respawn: int = 25
    monster_damage: int = 8
    monster_move_period: int = 2
    monster_fire_range: int = 8
    monster_fire_cooldown: int = 6
    shoot_range: int = 6

    def __post_init__(self):
        if self.episode_cap < 1:
            raise ValueError("episode_cap must be >= 1")
        if self.view_radius < 1:
            raise ValueError("view_radius must be >= 1")
        if self.frame_skip < 1:
            raise ValueError("frame_skip must be >= 1")
        if not self.palette_ids:
            raise ValueError("palette_ids must be non-empty")
        unknown = set(self.sub_actions) - set(KNOWN_SUB_ACTIONS)
        if unknown:
            raise ValueError(f"unknown sub-actions {sorted(unknown)}")

    @property
    def window(self) -> int:
        return 2 * self.view_radius + 1

    @property
    def channels(self) -> int:
        return N_STRUCT_CHANNELS + self.appearance_channels

    @property
    def action_count(self) -> int:
        return 2 ** len(self.sub_actions)


_SCENARIO_DEFAULTS = {
    "G1": dict(sub_actions=SUB_ACTIONS_MOVE, measurements=("health",),
               health_decay=1, kit_count=90, kit_respawn=30),
    "G2": dict(sub_actions=SUB_ACTIONS_MOVE, measurements=("health",),
               health_decay=1, kit_count=70, poison_count=70),
    "G3": dict(sub_actions=SUB_ACTIONS_BATTLE, measurements=("ammo", "health", "frags"),
               health_decay=0, kit_count=6, ammo_count=6, monster_count=5),
    "G4": dict(sub_actions=SUB_ACTIONS_BATTLE, measurements=("ammo", "health", "frags"),
               health_decay=0, kit_count=8, ammo_count=8, monster_count=6),
}


def scenario_config(name: str, palette_ids: tuple[int, ...] = (0,), **overrides) -> GridWorldConfig:
    base = name.split("-")[0].upper()
    if base not in _SCENARIO_DEFAULTS:
        raise ValueError(f"unknown scenario {name!r}; expected G1..G4")
    kwargs = dict(_SCENARIO_DEFAULTS[base])
    kwargs.update(overrides)
    return GridWorldConfig(scenario=base, map_text=builtin_map_text(base),
                           palette_ids=tuple(palette_ids), **kwargs)


@dataclass
class Observation:
    sensory: np.ndarray      # (window, window, channels) uint8, agent-frame
    measurements: np.ndarray  # float32


@dataclass
class EnvState:
    y: int = 0
    x: int = 0
    facing: int = 0
    health: int = 0
    ammo: int = 0
    frags: int = 0
    steps: int = 0   # agent steps (after frame skip)
    frame: int = 0   # underlying frames
    terminal: bool = False
    palette_id: int = 0
    kits: set = field(default_factory=set)
    poisons: set = field(default_factory=set)
    ammos: set = field(default_factory=set)
    monsters: list = field(default_factory=list)      # [y, x, last_fire_frame]
    projectiles: list = field(default_factory=list)   # [y, x, dy, dx]
    respawn_queue: list = field(default_factory=list)  # (due_frame, kind)


class GridWorld:
    """One scenario instance; single-threaded, owned by one actor."""

    _KIND_SETS = {KIND_KIT: "kits", KIND_POISON: "poisons", KIND_AMMO: "ammos"}

    def __init__(self, config: GridWorldConfig):
        self.config = config
        self.map = parse_map(config.map_text)
        self.state = EnvState()
        self._rng: np.random.Generator | None = None
        self._static: np.ndarray | None = None
        self._palette: np.ndarray | None = None
        h, w = self.map.shape
        r = config.view_radius
        self._pad_walls = np.ones((h + 2 * r, w + 2 * r), dtype=bool)
        self._pad_walls[r : r + h, r : r + w] = self.map.walls

    @property
    def action_count(self) -> int:
        return self.config.action_count

    @property
    def measurement_names(self) -> tuple[str, ...]:
        return self.config.measurements

    # -- episode setup -----------------------------------------------------

    def reset(self, rng: np.random.Generator | int) -> Observation:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self._rng = rng
        cfg = self.config
        st = self.state = EnvState()
        st.palette_id = int(cfg.palette_ids[rng.integers(len(cfg.palette_ids))])
        self._palette = palette_codes(st.palette_id, cfg.appearance_channels)
        self._build_static()

        spawn_cells = self.map.agent_spawns
        st.y, st.x = spawn_cells[rng.integers(len(spawn_cells))]
        st.facing = int(rng.integers(4))
        st.health = cfg.start_health
        st.ammo = cfg.start_ammo if "ammo" in cfg.measurements else 0
        st.frags = 0

        self._place_initial(KIND_KIT, cfg.kit_count, rng)
        self._place_initial(KIND_POISON, cfg.poison_count, rng)
        self._place_initial(KIND_AMMO, cfg.ammo_count, rng)
        self._place_initial(KIND_MONSTER, cfg.monster_count, rng)
        return self._observe()

    def _build_static(self) -> None:
        cfg = self.config
        r = cfg.view_radius
        hp, wp = self._pad_walls.shape
        static = np.zeros((hp, wp, cfg.channels), dtype=np.uint8)
        static[..., CH_WALL] = self._pad_walls
        wall_code = N_STRUCT_CHANNELS + int(self._palette[KIND_WALL])
        floor_code = N_STRUCT_CHANNELS + int(self._palette[KIND_FLOOR])
        static[..., wall_code] = self._pad_walls
        static[..., floor_code] = ~self._pad_walls
        self._static = static

    def _occupied(self, cell: tuple[int, int]) -> bool:
        st = self.state
        if cell == (st.y, st.x):
            return True
        if cell in st.kits or cell in st.poisons or cell in st.ammos:
            return True
        return any(m[0] == cell[0] and m[1] == cell[1] for m in st.monsters)

    def _place_initial(self, kind: int, count: int, rng: np.random.Generator) -> None:
        cells = self.map.spawns.get(kind, ())
        if count <= 0 or not cells:
            return
        order = rng.permutation(len(cells))
        placed = 0
        for i in order:
            if placed >= count:
                break
            cell = cells[i]
            if self._occupied(cell):
                continue
            self._add_entity(kind, cell)
            placed += 1

    def _add_entity(self, kind: int, cell: tuple[int, int]) -> None:
        st = self.state
        if kind == KIND_MONSTER:
            st.monsters.append([cell[0], cell[1], -self.config.monster_fire_cooldown])
        else:
            getattr(st, self._KIND_SETS[kind]).add(cell)

    # -- stepping ----------------------------------------------------------

    def step(self, action: int) -> tuple[Observation, bool]:
        st = self.state
        if st.terminal:
            raise RuntimeError("step() on a terminal episode; call reset()")
        if not 0 <= action < self.action_count:
            raise ValueError(f"action {action} out of range 0..{self.action_count - 1}")
        for _ in range(self.config.frame_skip):
            self._frame(action)
            if st.health <= 0:
                st.terminal = True
                break
        st.steps += 1
        if st.steps >= self.config.episode_cap:
            st.terminal = True
        return self._observe(), st.terminal

    def _decode(self, action: int) -> set[str]:
        subs = {name for i, name in enumerate(self.config.sub_actions) if action >> i & 1}
        if "forward" in subs and "backward" in subs:
            subs -= {"forward", "backward"}
        if "turn_left" in subs and "turn_right" in subs:
            subs -= {"turn_left", "turn_right"}
        return subs

    def _frame(self, action: int) -> None:
        st, cfg = self.state, self.config
        subs = self._decode(action)

        if "turn_left" in subs:
            st.facing = (st.facing - 1) % 4
        elif "turn_right" in subs:
            st.facing = (st.facing + 1) % 4

        moves: list[tuple[int, int]] = []
        repeat = 2 if "run" in subs else 1
        if "forward" in subs:
            moves += [DIRS[st.facing]] * repeat
        elif "backward" in subs:
            dy, dx = DIRS[st.facing]
            moves += [(-dy, -dx)] * repeat
        if "strafe_left" in subs:
            moves.append(DIRS[(st.facing - 1) % 4])
        if "strafe_right" in subs:
            moves.append(DIRS[(st.facing + 1) % 4])
        for dy, dx in moves:
            ny, nx = st.y + dy, st.x + dx
            if self.map.walls[ny, nx] or any(m[0] == ny and m[1] == nx for m in st.monsters):
                continue
            st.y, st.x = ny, nx
            self._pickup()
        self._projectile_contact()

        if "shoot" in subs and st.ammo > 0:
            st.ammo -= 1
            self._shoot_ray()

        self._advance_projectiles()
        if st.frame % cfg.monster_move_period == 0:
            self._monster_tick()

        st.health -= cfg.health_decay
        self._process_respawns()
        st.frame += 1

    def _pickup(self) -> None:
        st, cfg = self.state, self.config
        cell = (st.y, st.x)
        if cell in st.kits:
            st.kits.discard(cell)
            st.health = min(st.health + cfg.kit_heal, 100)
            st.respawn_queue.append((st.frame + cfg.kit_respawn, KIND_KIT))
        if cell in st.poisons:
            st.poisons.discard(cell)
            st.health -= cfg.poison_damage
            st.respawn_queue.append((st.frame + cfg.poison_respawn, KIND_POISON))
        if cell in st.ammos:
            st.ammos.discard(cell)
            st.ammo += cfg.ammo_pickup
            st.respawn_queue.append((st.frame + cfg.ammo_respawn, KIND_AMMO))

    def _projectile_contact(self) -> None:
        st = self.state
        for proj in list(st.projectiles):
            if proj[0] == st.y and proj[1] == st.x:
                st.health -= self.config.monster_damage
                st.projectiles.remove(proj)

    def _shoot_ray(self) -> None:
        st, cfg = self.state, self.config
        dy, dx = DIRS[st.facing]
        y, x = st.y, st.x
        for _ in range(cfg.shoot_range):
            y += dy
            x += dx
            if self.map.walls[y, x]:
                return
            for m in st.monsters:
                if m[0] == y and m[1] == x:
                    st.monsters.remove(m)
                    st.frags += 1
                    st.respawn_queue.append((st.frame + cfg.monster_respawn, KIND_MONSTER))
                    return

    def _advance_projectiles(self) -> None:
        st = self.state
        alive = []
        for y, x, dy, dx in st.projectiles:
            ny, nx = y + dy, x + dx
            if self.map.walls[ny, nx]:
                continue
            if ny == st.y and nx == st.x:
                st.health -= self.config.monster_damage
                continue
            alive.append([ny, nx, dy, dx])
        st.projectiles = alive

    def _monster_tick(self) -> None:
        st, cfg = self.state, self.config
        occupied = {(m[0], m[1]) for m in st.monsters}
        for m in st.monsters:
            my, mx = m[0], m[1]
            dy, dx = st.y - my, st.x - mx
            dist = abs(dy) + abs(dx)
            if dist == 1:
                st.health -= cfg.monster_damage
                continue
            # approach: larger-delta axis first, the other if blocked
            options = []
            step_y = (int(np.sign(dy)), 0)
            step_x = (0, int(np.sign(dx)))
            if abs(dy) >= abs(dx):
                options = [step_y, step_x]
            else:
                options = [step_x, step_y]
            for sy, sx in options:
                if sy == 0 and sx == 0:
                    continue
                ny, nx = my + sy, mx + sx
                if self.map.walls[ny, nx] or (ny, nx) in occupied or (ny == st.y and nx == st.x):
                    continue
                occupied.discard((my, mx))
                occupied.add((ny, nx))
                m[0], m[1] = ny, nx
                break
            self._maybe_fire(m)

    def _maybe_fire(self, m: list) -> None:
        st, cfg = self.state, self.config
        my, mx = m[0], m[1]
        if st.frame - m[2] < cfg.monster_fire_cooldown:
            return
        dy, dx = st.y - my, st.x - mx
        if dy != 0 and dx != 0:
            return
        dist = abs(dy) + abs(dx)
        if not 2 <= dist <= cfg.monster_fire_range:
            return
        sy, sx = int(np.sign(dy)), int(np.sign(dx))
        y, x = my, mx
        for _ in range(dist - 1):
            y += sy
            x += sx
            if self.map.walls[y, x]:
                return
        m[2] = st.frame
        st.projectiles.append([my + sy, mx + sx, sy, sx])

    def _process_respawns(self) -> None:
        st = self.state
        if not st.respawn_queue:
            return
        pending = []
        for due, kind in st.respawn_queue:
            if due > st.frame:
                pending.append((due, kind))
                continue
            cells = self.map.spawns.get(kind, ())
            free = [c for c in cells if not self._occupied(c)]
            if not free:
                pending.append((st.frame + 1, kind))
                continue
            self._add_entity(kind, free[int(self._rng.integers(len(free)))])
        st.respawn_queue = pending

    # -- observation -------------------------------------------------------

    def _observe(self) -> Observation:
        st, cfg = self.state, self.config
        r = cfg.view_radius
        size = cfg.window
        win = self._static[st.y : st.y + size, st.x : st.x + size].copy()

        def draw(cy: int, cx: int, kind: int) -> None:
            wy, wx = cy - st.y + r, cx - st.x + r
            if 0 <= wy < size and 0 <= wx < size:
                win[wy, wx, N_STRUCT_CHANNELS:] = 0
                win[wy, wx, _ENTITY_KIND_TO_CHANNEL[kind]] = 1
                win[wy, wx, N_STRUCT_CHANNELS + int(self._palette[kind])] = 1

        for cell in st.kits:
            draw(cell[0], cell[1], KIND_KIT)
        for cell in st.poisons:
            draw(cell[0], cell[1], KIND_POISON)
        for cell in st.ammos:
            draw(cell[0], cell[1], KIND_AMMO)
        for m in st.monsters:
            draw(m[0], m[1], KIND_MONSTER)
        for p in st.projectiles:
            draw(p[0], p[1], KIND_PROJECTILE)

        if st.facing:
            win = np.ascontiguousarray(np.rot90(win, k=st.facing))
        return Observation(sensory=win, measurements=self._measurements())

    def _measurements(self) -> np.ndarray:
        st = self.state
        values = {"health": st.health, "ammo": st.ammo, "frags": st.frags}
        return np.array([values[name] for name in self.config.measurements], dtype=np.float32)
