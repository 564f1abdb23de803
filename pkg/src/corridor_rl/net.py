"""Corridor topology: junctions in a row, one lane per direction, straight-through routes."""

from dataclasses import dataclass, field

DIRECTIONS = ("WE", "EW", "NS", "SN")
APPROACHES = ("W", "E", "N", "S")

# movements served by each signal phase
PHASE_OF_DIRECTION = {"WE": "WE_GREEN", "EW": "WE_GREEN", "NS": "NS_GREEN", "SN": "NS_GREEN"}


@dataclass(frozen=True)
class CorridorSpec:
    n: int
    link_length_m: float
    speed_limit_mps: float = 13.89  # 50 km/h
    lanes_per_direction: int = 1

    def validate(self):
        if self.n < 1:
            raise ValueError(f"need at least one junction, got n={self.n}")
        if self.link_length_m <= 0:
            raise ValueError(f"link length must be positive, got {self.link_length_m}")
        if self.lanes_per_direction != 1:
            raise ValueError("only single-lane roads are supported")


@dataclass(frozen=True)
class Link:
    id: str
    from_node: str
    to_node: str
    length_m: float
    direction_tag: str  # WE | EW | NS | SN
    kind: str           # entry | internal | exit


@dataclass(frozen=True)
class Route:
    id: str
    direction_tag: str
    links: tuple          # ordered link ids, entry -> exit
    junctions: tuple      # junction indices crossed, in traversal order

    @property
    def num_links(self):
        return len(self.links)


@dataclass(frozen=True)
class DemandConfig:
    """Arrival rates in veh/hour. NS/SN rates apply identically at every side road."""
    lambda_we: float = 0.0
    lambda_ew: float = 0.0
    lambda_ns: float = 0.0
    lambda_sn: float = 0.0

    def validate(self):
        for name in ("lambda_we", "lambda_ew", "lambda_ns", "lambda_sn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def rate_for(self, direction_tag):
        return {"WE": self.lambda_we, "EW": self.lambda_ew,
                "NS": self.lambda_ns, "SN": self.lambda_sn}[direction_tag]

    def mirrored(self):
        """Swap WE and EW demand (W<->E relabeling)."""
        return DemandConfig(lambda_we=self.lambda_ew, lambda_ew=self.lambda_we,
                            lambda_ns=self.lambda_ns, lambda_sn=self.lambda_sn)


@dataclass
class CorridorNetwork:
    spec: CorridorSpec
    links: dict = field(default_factory=dict)       # id -> Link
    routes: dict = field(default_factory=dict)      # id -> Route
    # junction index (1-based) -> {"W"/"E"/"N"/"S": approach link id}
    approaches: dict = field(default_factory=dict)
    # (junction, approach letter) -> downstream link id for the straight-through movement
    downstream: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.spec.n

    @property
    def link_length_m(self):
        return self.spec.link_length_m

    @property
    def junction_ids(self):
        return list(range(1, self.spec.n + 1))

    @property
    def entry_links(self):
        return [l.id for l in self.links.values() if l.kind == "entry"]

    def mirror_entry(self, entry_link_id):
        """Entry link that entry_link_id maps to under the W<->E relabeling."""
        n = self.spec.n
        if entry_link_id == "WE_0":
            return "EW_0"
        if entry_link_id == "EW_0":
            return "WE_0"
        tag, j, _ = entry_link_id.split("_")
        return f"{tag}_{n + 1 - int(j)}_in"

    def route_of_entry(self, entry_link_id):
        for r in self.routes.values():
            if r.links[0] == entry_link_id:
                return r
        raise KeyError(entry_link_id)


def build_corridor(spec: CorridorSpec) -> CorridorNetwork:
    """Build the n-junction corridor with uniform link length.

    Horizontal chains have n+1 links per direction; each junction has an
    NS and an SN side road of 2 links each. Every link has length l.
    """
    spec.validate()
    n, l = spec.n, spec.link_length_m
    net = CorridorNetwork(spec=spec)

    def add(link):
        net.links[link.id] = link

    def node(i):
        return f"J{i}"

    def hkind(i):  # position i in a chain of n+1 links
        return "entry" if i == 0 else ("exit" if i == n else "internal")

    # WE chain: W -> J1 -> ... -> Jn -> E
    we_nodes = ["W"] + [node(i) for i in range(1, n + 1)] + ["E"]
    for i in range(n + 1):
        add(Link(f"WE_{i}", we_nodes[i], we_nodes[i + 1], l, "WE", hkind(i)))
    # EW chain: E -> Jn -> ... -> J1 -> W
    ew_nodes = ["E"] + [node(i) for i in range(n, 0, -1)] + ["W"]
    for i in range(n + 1):
        add(Link(f"EW_{i}", ew_nodes[i], ew_nodes[i + 1], l, "EW", hkind(i)))
    # side roads
    for j in range(1, n + 1):
        add(Link(f"NS_{j}_in", f"N{j}", node(j), l, "NS", "entry"))
        add(Link(f"NS_{j}_out", node(j), f"S{j}", l, "NS", "exit"))
        add(Link(f"SN_{j}_in", f"S{j}", node(j), l, "SN", "entry"))
        add(Link(f"SN_{j}_out", node(j), f"N{j}", l, "SN", "exit"))

    net.routes["WE"] = Route("WE", "WE", tuple(f"WE_{i}" for i in range(n + 1)),
                             tuple(range(1, n + 1)))
    net.routes["EW"] = Route("EW", "EW", tuple(f"EW_{i}" for i in range(n + 1)),
                             tuple(range(n, 0, -1)))
    for j in range(1, n + 1):
        net.routes[f"NS_{j}"] = Route(f"NS_{j}", "NS", (f"NS_{j}_in", f"NS_{j}_out"), (j,))
        net.routes[f"SN_{j}"] = Route(f"SN_{j}", "SN", (f"SN_{j}_in", f"SN_{j}_out"), (j,))

    for j in range(1, n + 1):
        net.approaches[j] = {
            "W": f"WE_{j - 1}",
            "E": f"EW_{n - j}",
            "N": f"NS_{j}_in",
            "S": f"SN_{j}_in",
        }
        net.downstream[(j, "W")] = f"WE_{j}"
        net.downstream[(j, "E")] = f"EW_{n - j + 1}"
        net.downstream[(j, "N")] = f"NS_{j}_out"
        net.downstream[(j, "S")] = f"SN_{j}_out"

    return net


def routes_through(net: CorridorNetwork, junction_id):
    """All (route, approach link id) pairs whose route crosses the junction."""
    if junction_id not in net.approaches:
        raise KeyError(f"unknown junction {junction_id!r}")
    out = []
    for approach in APPROACHES:
        link_id = net.approaches[junction_id][approach]
        tag = net.links[link_id].direction_tag
        if tag in ("NS", "SN"):
            route = net.routes[f"{tag}_{junction_id}"]
        else:
            route = net.routes[tag]
        out.append((route, link_id))
    return out
