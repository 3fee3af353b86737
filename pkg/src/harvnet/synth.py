"""Synthetic spam-event logs with planted harvester communities.

Every scenario is driven by one seeded generator, so a config plus a seed
fully determines the emitted log.  Addresses come from reserved
benchmarking/documentation ranges: harvesters from 198.18.0.0/16, spam
servers from 198.19.0.0/16, coordinated groups from TEST-NET blocks.
"""

from __future__ import annotations

import ipaddress
import json
from dataclasses import asdict, dataclass, field
from datetime import timedelta
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .ingest import EmailEvent, month_bounds, month_key, write_event_csv

PHISHING_SUBJECTS = (
    "Verify your PayPal account",
    "Your account has been suspended",
    "Chase online banking alert",
    "Please update your password",
    "Urgent: confirm your bank details",
    "eBay account verification required",
    "Security alert for your account",
    "Wells Fargo login notice",
)

BENIGN_SUBJECTS = (
    "Cheap watches",
    "Hot stock tip of the week",
    "Meet singles near you",
    "Replica handbags on sale",
    "Lose weight fast",
    "Discount software downloads",
    "You have won a prize",
    "Cheap meds online",
    "Increase your traffic",
    "Best mortgage rates",
)

HARVESTER_NET = ipaddress.IPv4Network("198.18.0.0/16")
SERVER_NET = ipaddress.IPv4Network("198.19.0.0/16")
GROUP_NETS = tuple(ipaddress.IPv4Network(n) for n in ("203.0.113.0/24", "192.0.2.0/24", "198.51.100.0/24"))


@dataclass
class CoordinatedGroup:
    community: int = 0
    size: int = 10


@dataclass
class ScenarioConfig:
    communities: int = 5
    harvesters_per_community: tuple[int, int] = (40, 40)
    servers_per_community: int = 10
    global_servers: int = 20
    p_in: float = 0.8
    p_out: float = 0.05
    phisher_communities: tuple[int, ...] = (1, 3)
    emails_per_harvester: tuple[int, int] = (200, 200)
    phishing_subject_prob: float = 0.98
    benign_phishing_prob: float = 0.01
    active_hours: int = 72
    coordinated_groups: list[CoordinatedGroup] = field(default_factory=lambda: [CoordinatedGroup()])
    jitter_minutes: float = 5.0
    addresses_per_harvester: tuple[int, int] = (1, 50)
    month: str = "2006-10"
    seed: int = 0

    def validate(self) -> None:
        def rng_ok(name):
            lo, hi = getattr(self, name)
            if not (isinstance(lo, int) and isinstance(hi, int) and 0 < lo <= hi):
                raise ConfigError(f"{name} must be a positive integer range, got {(lo, hi)}")

        if self.communities < 1:
            raise ConfigError("need at least one community")
        for name in ("harvesters_per_community", "emails_per_harvester", "addresses_per_harvester"):
            rng_ok(name)
        if self.servers_per_community < 1 or self.global_servers < 0:
            raise ConfigError("server pool sizes must be positive")
        if not (0 <= self.p_in <= 1 and 0 <= self.p_out <= 1 and self.p_in + self.p_out <= 1 + 1e-12):
            raise ConfigError(f"need p_in, p_out >= 0 and p_in + p_out <= 1 (got {self.p_in}, {self.p_out})")
        if self.communities == 1 and self.p_out > 0:
            raise ConfigError("p_out must be 0 with a single community")
        if self.global_servers == 0 and self.p_in + self.p_out < 1 - 1e-12:
            raise ConfigError("residual server mass needs a global server pool")
        if any(not 0 <= c < self.communities for c in self.phisher_communities):
            raise ConfigError(f"phisher community ids out of range: {self.phisher_communities}")
        if not self.phishing_subject_prob >= 0.95 or not 0 <= self.benign_phishing_prob < 0.05:
            raise ConfigError("phishing_subject_prob must be >= 0.95 and benign_phishing_prob < 0.05")
        if not 1 <= self.active_hours:
            raise ConfigError("active_hours must be positive")
        if not 0 <= self.jitter_minutes <= 5:
            raise ConfigError("jitter_minutes must be within [0, 5]")
        if len(self.coordinated_groups) > len(GROUP_NETS):
            raise ConfigError(f"at most {len(GROUP_NETS)} coordinated groups are supported")
        for g in self.coordinated_groups:
            if not 0 <= g.community < self.communities:
                raise ConfigError(f"coordinated group community {g.community} out of range")
            if not 2 <= g.size <= min(self.harvesters_per_community[0], 254):
                raise ConfigError(f"coordinated group size {g.size} must fit its community")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        month_key(self.month)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
        data = dict(data)
        for name in ("harvesters_per_community", "emails_per_harvester", "addresses_per_harvester"):
            if name in data:
                value = data[name]
                data[name] = (value, value) if isinstance(value, int) else tuple(value)
        if "phisher_communities" in data:
            data["phisher_communities"] = tuple(data["phisher_communities"])
        if "coordinated_groups" in data:
            try:
                data["coordinated_groups"] = [CoordinatedGroup(**g) for g in data["coordinated_groups"]]
            except TypeError as exc:
                raise ConfigError(f"bad coordinated group: {exc}") from exc
        try:
            config = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        config.validate()
        return config

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GroundTruth:
    harvesters: list[str]
    community: list[int]
    phisher: list[bool]
    coordinated_group: list[int | None]
    group_prefixes: list[str]

    def groups(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for ip, g in zip(self.harvesters, self.coordinated_group):
            if g is not None:
                out.setdefault(g, []).append(ip)
        return out

    def to_dict(self) -> dict:
        return {
            "harvesters": [
                {"ip": ip, "community": c, "phisher": p, "coordinated_group": g}
                for ip, c, p, g in zip(self.harvesters, self.community, self.phisher, self.coordinated_group)
            ],
            "coordinated_groups": [
                {"id": gid, "prefix": self.group_prefixes[gid], "members": members}
                for gid, members in sorted(self.groups().items())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        rows = data["harvesters"]
        prefixes = [g["prefix"] for g in sorted(data.get("coordinated_groups", []), key=lambda g: g["id"])]
        return cls(
            [r["ip"] for r in rows],
            [int(r["community"]) for r in rows],
            [bool(r["phisher"]) for r in rows],
            [r.get("coordinated_group") for r in rows],
            prefixes,
        )


def _sample_ips(rng, net: ipaddress.IPv4Network, n: int, taken: set) -> list[str]:
    base = int(net.network_address)
    out = []
    while len(out) < n:
        for offset in rng.integers(1, net.num_addresses - 1, size=2 * (n - len(out))):
            ip = str(ipaddress.IPv4Address(base + int(offset)))
            if ip.endswith((".0", ".255")) or ip in taken:
                continue
            taken.add(ip)
            out.append(ip)
            if len(out) == n:
                break
    return out


def generate_scenario(config: ScenarioConfig) -> tuple[list[EmailEvent], GroundTruth]:
    config.validate()
    rng = np.random.default_rng(int(config.seed))
    start, end = month_bounds(config.month)
    n_hours = int((end - start).total_seconds()) // 3600
    month_seconds = n_hours * 3600
    K = config.communities

    sizes = rng.integers(config.harvesters_per_community[0], config.harvesters_per_community[1] + 1, size=K)
    taken: set[str] = set()
    pools = [_sample_ips(rng, SERVER_NET, config.servers_per_community, taken) for _ in range(K)]
    global_pool = _sample_ips(rng, SERVER_NET, config.global_servers, taken)

    templates = []
    for _ in range(K):
        hours = rng.choice(n_hours, size=min(config.active_hours, n_hours), replace=False)
        weights = rng.dirichlet(np.ones(hours.size))
        templates.append((np.sort(hours), weights[np.argsort(hours)]))

    community, group_of, ips = [], [], []
    group_prefixes = []
    coordinated = {}
    for gid, group in enumerate(config.coordinated_groups):
        net = GROUP_NETS[gid]
        group_prefixes.append(f"{'.'.join(str(net.network_address).split('.')[:3])}/24")
        coordinated.setdefault(group.community, []).append((gid, group.size, net))
    for c in range(K):
        n = int(sizes[c])
        slots = []
        for gid, size, net in coordinated.get(c, []):
            slots += [(gid, ip) for ip in _sample_ips(rng, net, size, taken)]
        slots += [(None, ip) for ip in _sample_ips(rng, HARVESTER_NET, n - len(slots), taken)]
        for gid, ip in slots:
            community.append(c)
            group_of.append(gid)
            ips.append(ip)

    phisher = [c in config.phisher_communities for c in community]
    group_times = {}
    jitter = int(round(config.jitter_minutes * 60))
    records = []
    for h, ip in enumerate(ips):
        c = community[h]
        gid = group_of[h]
        if gid is not None and gid in group_times:
            base = group_times[gid]
        else:
            n_emails = int(rng.integers(config.emails_per_harvester[0], config.emails_per_harvester[1] + 1))
            hours, weights = templates[c]
            base = rng.choice(hours, size=n_emails, p=weights) * 3600 + rng.integers(0, 3600, size=n_emails)
            if gid is not None:
                group_times[gid] = base
        n_emails = base.size
        if gid is not None and jitter:
            seconds = np.clip(base + rng.integers(-jitter, jitter + 1, size=n_emails), 0, month_seconds - 1)
        else:
            seconds = base

        u = rng.random(n_emails)
        servers = []
        for x in u:
            if x < config.p_in:
                pool = pools[c]
            elif x < config.p_in + config.p_out:
                other = int(rng.integers(K - 1))
                pool = pools[other + (other >= c)]
            else:
                pool = global_pool
            servers.append(pool[int(rng.integers(len(pool)))])

        q = config.phishing_subject_prob if phisher[h] else config.benign_phishing_prob
        phishy = rng.random(n_emails) < q
        subj_idx = rng.integers(0, 1 << 30, size=n_emails)
        acquired = int(rng.integers(config.addresses_per_harvester[0], config.addresses_per_harvester[1] + 1))
        first = int(np.argmin(seconds))
        for e in range(n_emails):
            pool = PHISHING_SUBJECTS if phishy[e] else BENIGN_SUBJECTS
            records.append((
                int(seconds[e]), ip, servers[e], pool[subj_idx[e] % len(pool)],
                acquired if e == first else 0,
            ))

    records.sort(key=lambda r: (r[0], ipaddress.IPv4Address(r[1]), ipaddress.IPv4Address(r[2]), r[3], -r[4]))
    events = [
        EmailEvent(start + timedelta(seconds=s), hip, sip, subject, delta)
        for s, hip, sip, subject, delta in records
    ]
    truth = GroundTruth(ips, community, phisher, group_of, group_prefixes)
    return events, truth


def write_scenario(events, truth: GroundTruth, config: ScenarioConfig, directory) -> tuple[str, str]:
    """Write ``events.csv`` and ``ground_truth.json`` into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "events.csv"
    with open(log_path, "w", encoding="utf-8", newline="") as fh:
        write_event_csv(events, fh)
    truth_path = out / "ground_truth.json"
    payload = {"config": config.to_dict(), **truth.to_dict()}
    truth_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")
    return str(log_path), str(truth_path)

