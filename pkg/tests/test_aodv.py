from collections import Counter, deque

import numpy as np
import pytest
from hypothesis import given, strategies as st

from manetids import aodv
from manetids.aodv import AodvNode, RouteEntry, Rreq, Rrep, Rerr
from manetids.errors import MissingReverseRoute


def bfs(adj, src):
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def line(n):
    return [[j for j in (i - 1, i + 1) if 0 <= j < n] for i in range(n)]


def query_cycle(nodes, adj, src, dst):
    """Synchronous flood: every hop costs the same, so a FIFO gives arrival order."""
    rebroadcasts = Counter()
    replies = []
    q = deque([(src, nodes[src].originate_rreq(dst))])
    while q:
        u, msg = q.popleft()
        for v in adj[u]:
            act = nodes[v].handle_rreq(msg, u)
            if isinstance(act, aodv.Rebroadcast):
                rebroadcasts[(v, act.rreq.flood_id)] += 1
                q.append((v, act.rreq))
            elif isinstance(act, aodv.Reply):
                replies.append((v, act))
    for v, act in replies:
        cur, nxt, rrep = v, act.next_hop, act.rrep
        while True:
            out = nodes[nxt].handle_rrep(rrep, cur)
            if isinstance(out, aodv.Consume):
                break
            cur, nxt, rrep = nxt, out.next_hop, out.rrep
    return rebroadcasts


def test_originate_fresh():
    n = AodvNode(0)
    r = n.originate_rreq(5)
    assert r.hop_count == 0 and r.dest_seq_known is None
    assert r.origin == 0 and r.origin_seq == 1
    assert n.originate_rreq(5).rreq_id == r.rreq_id + 1
    assert n.seq == 2


def test_originate_rejects_self_and_known_route():
    n = AodvNode(0)
    with pytest.raises(ValueError):
        n.originate_rreq(0)
    n.install(RouteEntry(3, 1, 2, 4))
    with pytest.raises(ValueError):
        n.originate_rreq(3)


def test_originate_carries_last_known_seq():
    n = AodvNode(0)
    n.install(RouteEntry(3, 1, 2, 4))
    n.handle_link_break(1)
    assert n.originate_rreq(3).dest_seq_known == 5


def test_duplicate_rreq_discarded():
    n = AodvNode(2)
    r = Rreq(0, 1, 1, 9, None, 0)
    assert isinstance(n.handle_rreq(r, 0), aodv.Rebroadcast)
    before = dict(n.table)
    assert isinstance(n.handle_rreq(r, 0), aodv.Discard)
    assert n.table == before


def test_destination_replies_with_own_seq():
    n = AodvNode(4, seq=3)
    act = n.handle_rreq(Rreq(0, 1, 1, 4, None, 2), 3)
    assert isinstance(act, aodv.Reply)
    assert act.rrep == Rrep(4, 4, 0, 0)
    assert act.next_hop == 3
    assert n.lookup_next_hop(0) == (3, 3)


def test_intermediate_with_fresh_route_replies():
    n = AodvNode(2)
    n.install(RouteEntry(9, 5, 2, 7))
    act = n.handle_rreq(Rreq(0, 1, 1, 9, 5, 1), 1)
    assert isinstance(act, aodv.Reply)
    assert act.rrep == Rrep(9, 7, 2, 0)


def test_intermediate_with_stale_route_rebroadcasts():
    n = AodvNode(2)
    n.install(RouteEntry(9, 5, 2, 3))
    act = n.handle_rreq(Rreq(0, 1, 1, 9, 5, 1), 1)
    assert isinstance(act, aodv.Rebroadcast)
    assert act.rreq.hop_count == 2


def test_rrep_consume_and_forward():
    origin = AodvNode(0)
    origin.originate_rreq(4)
    assert isinstance(origin.handle_rrep(Rrep(4, 1, 2, 0), 1), aodv.Consume)
    assert origin.lookup_next_hop(4) == (1, 3)

    mid = AodvNode(1)
    mid.install(RouteEntry(0, 0, 1, 1))
    out = mid.handle_rrep(Rrep(4, 1, 1, 0), 2)
    assert isinstance(out, aodv.Forward)
    assert out.rrep.hop_count == 2 and out.next_hop == 0


def test_rrep_without_reverse_route():
    with pytest.raises(MissingReverseRoute):
        AodvNode(1).handle_rrep(Rrep(4, 1, 1, 0), 2)


def test_update_rule_cases():
    old = RouteEntry(3, 1, 4, 5)
    assert aodv.route_update_rule(old, RouteEntry(3, 2, 9, 6)).next_hop == 2
    assert aodv.route_update_rule(old, RouteEntry(3, 2, 3, 5)).next_hop == 2
    assert aodv.route_update_rule(old, RouteEntry(3, 2, 4, 5)) is old
    assert aodv.route_update_rule(None, RouteEntry(3, 2, 4, 5)).next_hop == 2
    assert aodv.route_update_rule(RouteEntry(3, 1, 1, 9, False), RouteEntry(3, 2, 4, 5)).next_hop == 2


entries = st.builds(RouteEntry, st.just(3), st.integers(0, 5), st.integers(1, 8), st.integers(0, 6), st.booleans())


@given(st.one_of(st.none(), entries), entries.filter(lambda e: e.valid))
def test_update_rule_idempotent(existing, cand):
    once = aodv.route_update_rule(existing, cand)
    assert aodv.route_update_rule(once, cand) == once


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(1, 6), st.integers(0, 9)), max_size=30))
def test_stored_seq_never_decreases(updates):
    n = AodvNode(0)
    last = -1
    for i, (hop, hops, seq) in enumerate(updates):
        if i % 4 == 3:
            n.handle_link_break(hop)
        else:
            n.install(RouteEntry(7, hop, hops, seq))
        if 7 in n.table:
            assert n.table[7].dest_seq >= last
            last = n.table[7].dest_seq


def test_link_break_none_and_two():
    n = AodvNode(0)
    n.install(RouteEntry(3, 1, 2, 4))
    n.install(RouteEntry(5, 1, 3, 2))
    n.install(RouteEntry(6, 2, 1, 1))
    before = dict(n.table)
    assert n.handle_link_break(9) is None
    assert n.table == before
    rerr = n.handle_link_break(1)
    assert rerr == Rerr(((3, 5), (5, 3)))
    assert n.lookup_next_hop(3) is None and n.lookup_next_hop(5) is None
    assert n.lookup_next_hop(6) == (2, 1)


def test_rerr_must_be_nonempty():
    with pytest.raises(ValueError):
        Rerr(())


def test_lookup_self_and_invalid():
    n = AodvNode(4)
    assert n.lookup_next_hop(4) == (4, 0)
    n.install(RouteEntry(1, 2, 2, 0))
    n.handle_link_break(2)
    assert n.lookup_next_hop(1) is None


def test_line_topology_hop_count():
    nodes = [AodvNode(i) for i in range(5)]
    query_cycle(nodes, line(5), 0, 4)
    assert nodes[0].lookup_next_hop(4) == (1, 4)


def test_cascaded_rerr_matches_reachability():
    n = 6
    adj = line(n)
    nodes = [AodvNode(i) for i in range(n)]
    query_cycle(nodes, adj, 0, 5)
    # link 3-4 breaks; nodes upstream of it lose 4 and 5
    rerr = nodes[3].handle_link_break(4)
    sender = 3
    while rerr is not None and sender > 0:
        rerr = nodes[sender - 1].handle_rerr(rerr, sender)
        sender -= 1
    cut = [[v for v in adj[u] if {u, v} != {3, 4}] for u in range(n)]
    for u in range(4):
        reach = bfs(cut, u)
        for d in (4, 5):
            has = nodes[u].lookup_next_hop(d) is not None
            assert has == (d in reach)


def random_connected(rng, n, size=600.0, radius=250.0):
    while True:
        p = rng.uniform(0, size, size=(n, 2))
        d = np.hypot(*(p[:, None, :] - p[None, :, :]).transpose(2, 0, 1))
        adj = [[j for j in range(n) if j != i and d[i, j] <= radius] for i in range(n)]
        if len(bfs(adj, 0)) == n:
            return adj


def test_hop_counts_equal_bfs_on_random_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(3, 16))
        adj = random_connected(rng, n)
        src, dst = (int(v) for v in rng.choice(n, 2, replace=False))
        nodes = [AodvNode(i) for i in range(n)]
        rebroadcasts = query_cycle(nodes, adj, src, dst)
        assert nodes[src].lookup_next_hop(dst)[1] == bfs(adj, src)[dst]
        assert all(c == 1 for c in rebroadcasts.values())
