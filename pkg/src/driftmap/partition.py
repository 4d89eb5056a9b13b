"""Clustering of an SNN into crossbar-sized pieces.

Each cluster is post-neuron-centric: a post-synaptic neuron brings its whole
fan-in synapse group, which keeps the crossbar fan-in constraint (at most N
pre-synaptic lines per post neuron) satisfied by construction. Greedy
seeding in topological-layer order is followed by pairwise-exchange
refinement that only accepts strictly cut-reducing moves, weighting each cut
synapse by its average spike rate so the refinement minimizes inter-cluster
spike traffic.

Pre-synaptic neurons may be replicated across clusters (their spikes fan
out); synapses belong to exactly one cluster. Spikes arriving from input
neurons enter the chip regardless of clustering and are not counted as cut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, ValidationError
from .model import SnnModel, Synapse
from .profiler import SpikeProfile


@dataclass(frozen=True)
class Cluster:
    id: int
    pre_neurons: tuple     # sorted neuron ids feeding the cluster
    post_neurons: tuple    # sorted neuron ids computed in the cluster
    synapses: tuple        # Synapse records internal to the cluster
    cut_spikes: float      # eta-weighted traffic entering from other clusters

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "pre": list(self.pre_neurons),
            "post": list(self.post_neurons),
            "synapses": [
                {"id": s.id, "pre": s.pre, "post": s.post, "level": s.level}
                for s in self.synapses
            ],
            "cut_spikes": self.cut_spikes,
        }


def cluster_from_dict(doc: dict) -> Cluster:
    try:
        return Cluster(
            id=int(doc["id"]),
            pre_neurons=tuple(doc["pre"]),
            post_neurons=tuple(doc["post"]),
            synapses=tuple(Synapse(id=s["id"], pre=s["pre"], post=s["post"],
                                   level=s["level"])
                           for s in doc["synapses"]),
            cut_spikes=float(doc.get("cut_spikes", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad cluster document: {exc}")


def _groups_by_post(model: SnnModel):
    groups = {}
    for s in model.synapses:
        groups.setdefault(s.post, []).append(s)
    return groups


def _assignment_cut(assign, groups, producer_of, eta):
    """Total eta crossing cluster boundaries for a post->cluster assignment."""
    total = 0.0
    for post, cluster_id in assign.items():
        for s in groups[post]:
            src = producer_of.get(s.pre)
            if src is not None and assign[src] != cluster_id:
                total += eta[s.id]
    return total


def partition_model(model: SnnModel, profile: SpikeProfile, crossbar_n: int,
                    seed: int = 0) -> list:
    """Split the model into clusters fitting an N x N crossbar."""
    if crossbar_n < 1:
        raise ValidationError("crossbar size must be >= 1")
    if model.num_synapses == 0:
        raise ValidationError("empty model: no synapses to partition")
    eta = np.asarray(profile.per_synapse_eta, dtype=np.float64)
    if len(eta) != model.num_synapses:
        raise ValidationError("profile does not match model synapse count")

    groups = _groups_by_post(model)
    for post, syns in groups.items():
        if len(syns) > crossbar_n:
            raise InfeasibleError(
                f"neuron {post} has fan-in {len(syns)} exceeding crossbar "
                f"size {crossbar_n}; unmappable without neuron splitting")

    # a pre-neuron's producer is the cluster computing it; inputs have none
    producer_of = {}  # neuron id -> post id (itself); resolved via assign
    for post in groups:
        producer_of[post] = post

    topo_rank = {nid: rank for rank, nid in enumerate(model.topo_order)}
    posts = sorted(groups, key=lambda p: (topo_rank[p], p))

    # greedy seeding: place each post group into the cheapest feasible cluster
    assign = {}
    members = []   # cluster id -> list of posts
    pre_sets = []  # cluster id -> set of pre neurons

    def fits(cid, post):
        pres = {s.pre for s in groups[post]}
        return (len(members[cid]) < crossbar_n
                and len(pre_sets[cid] | pres) <= crossbar_n)

    for post in posts:
        pres = {s.pre for s in groups[post]}
        best = None
        for cid in range(len(members)):
            if not fits(cid, post):
                continue
            added_cut = 0.0
            for s in groups[post]:
                src = producer_of.get(s.pre)
                if src is not None and src in assign and assign[src] != cid:
                    added_cut += eta[s.id]
            if best is None or added_cut < best[0]:
                best = (added_cut, cid)
        if best is None:
            members.append([])
            pre_sets.append(set())
            best = (0.0, len(members) - 1)
        cid = best[1]
        assign[post] = cid
        members[cid].append(post)
        pre_sets[cid] |= pres

    # pairwise-exchange refinement: moves and swaps, strictly improving only
    rng_order = sorted(posts)
    budget = 10 * model.num_synapses
    current = _assignment_cut(assign, groups, producer_of, eta)
    improved = True
    while improved and budget > 0:
        improved = False
        for post in rng_order:
            src_cid = assign[post]
            for dst_cid in range(len(members)):
                if dst_cid == src_cid or budget <= 0:
                    continue
                # plain move
                trial = dict(assign)
                trial[post] = dst_cid
                if _feasible(trial, groups, crossbar_n):
                    cost = _assignment_cut(trial, groups, producer_of, eta)
                    if cost < current - 1e-12:
                        assign = trial
                        current = cost
                        budget -= 1
                        improved = True
                        src_cid = dst_cid
                        continue
                # swap with each post of the destination
                for other in [p for p, c in assign.items() if c == dst_cid]:
                    trial = dict(assign)
                    trial[post], trial[other] = dst_cid, src_cid
                    if not _feasible(trial, groups, crossbar_n):
                        continue
                    cost = _assignment_cut(trial, groups, producer_of, eta)
                    if cost < current - 1e-12:
                        assign = trial
                        current = cost
                        budget -= 1
                        improved = True
                        src_cid = dst_cid
                        break

    # materialize clusters, dropping any emptied ones and renumbering
    used = sorted({cid for cid in assign.values()})
    remap = {cid: idx for idx, cid in enumerate(used)}
    out_posts = [[] for _ in used]
    for post, cid in assign.items():
        out_posts[remap[cid]].append(post)

    clusters = []
    for cid, post_list in enumerate(out_posts):
        post_list = sorted(post_list)
        syns = sorted((s for p in post_list for s in groups[p]),
                      key=lambda s: s.id)
        pres = sorted({s.pre for s in syns})
        cut = 0.0
        for s in syns:
            src = producer_of.get(s.pre)
            if src is not None and remap[assign[src]] != cid:
                cut += eta[s.id]
        clusters.append(Cluster(id=cid, pre_neurons=tuple(pres),
                                post_neurons=tuple(post_list),
                                synapses=tuple(syns), cut_spikes=cut))
    return clusters


def _feasible(assign, groups, crossbar_n):
    posts_in = {}
    pres_in = {}
    for post, cid in assign.items():
        posts_in.setdefault(cid, []).append(post)
        pres_in.setdefault(cid, set()).update(s.pre for s in groups[post])
    return all(len(v) <= crossbar_n for v in posts_in.values()) and \
        all(len(v) <= crossbar_n for v in pres_in.values())


def cut_cost(clusters, profile: SpikeProfile) -> float:
    """Eta-weighted spike traffic crossing cluster boundaries.

    A synapse counts when the cluster computing its pre-neuron differs from
    the cluster holding the synapse; synapses fed by input neurons never
    count (their spikes arrive from off-chip either way).
    """
    producer = {}
    for c in clusters:
        for post in c.post_neurons:
            producer[post] = c.id
    eta = np.asarray(profile.per_synapse_eta, dtype=np.float64)
    total = 0.0
    for c in clusters:
        for s in c.synapses:
            src = producer.get(s.pre)
            if src is not None and src != c.id:
                total += eta[s.id]
    return float(total)


def validate_clusters(model: SnnModel, clusters, crossbar_n: int) -> None:
    """Exact-cover and size checks; raises on any violation."""
    seen = {}
    for c in clusters:
        if len(c.pre_neurons) > crossbar_n or len(c.post_neurons) > crossbar_n:
            raise ValidationError(f"cluster {c.id} exceeds crossbar size")
        pre_set = set(c.pre_neurons)
        post_set = set(c.post_neurons)
        for s in c.synapses:
            if s.pre not in pre_set or s.post not in post_set:
                raise ValidationError(
                    f"cluster {c.id}: synapse {s.id} endpoints not in "
                    f"cluster neuron sets")
            if s.id in seen:
                raise ValidationError(
                    f"synapse {s.id} appears in clusters {seen[s.id]} "
                    f"and {c.id}")
            seen[s.id] = c.id
    if len(seen) != model.num_synapses:
        missing = sorted(set(range(model.num_synapses)) - set(seen))[:5]
        raise ValidationError(f"synapses not covered by any cluster: "
                              f"{missing}...")
