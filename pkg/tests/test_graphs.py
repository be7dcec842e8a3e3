"""Graph structures, Meek closure, and CPDAG conversion.

The DAG->CPDAG oracle used here is independent of the Meek rules: it
enumerates every DAG on p nodes, groups them into Markov equivalence
classes by (skeleton, v-structures), and keeps an edge directed exactly
when every member of the class orients it the same way.
"""

from itertools import combinations, permutations, product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pctune.exceptions import InvalidInputError
from pctune.graphs import (
    Cpdag,
    Dag,
    Pdag,
    apply_meek_rules,
    dag_to_cpdag,
    format_graph,
    is_acyclic,
    parse_dag,
    parse_pdag,
    v_structures,
)


def all_dags(p):
    pairs = list(combinations(range(1, p + 1), 2))
    for states in product((0, 1, 2), repeat=len(pairs)):
        edges = []
        for (a, b), s in zip(pairs, states):
            if s == 1:
                edges.append((a, b))
            elif s == 2:
                edges.append((b, a))
        if is_acyclic(p, edges):
            yield Dag(p, edges)


def cpdag_by_enumeration(dag):
    """Union of orientations over the Markov equivalence class of dag."""
    sig = (dag.skeleton_pairs(), v_structures(dag))
    members = [
        g for g in all_dags(dag.p)
        if (g.skeleton_pairs(), v_structures(g)) == sig
    ]
    directed, undirected = [], []
    for a, b in dag.skeleton_pairs():
        orientations = {(a, b) in g.edges for g in members}
        if orientations == {True}:
            directed.append((a, b))
        elif orientations == {False}:
            directed.append((b, a))
        else:
            undirected.append((a, b))
    return Cpdag(dag.p, directed, undirected)


def topo_order_exists(p, edges):
    """Independent acyclicity oracle: DFS three-color cycle detection."""
    out = {v: [] for v in range(1, p + 1)}
    for j, i in edges:
        out[j].append(i)
    color = {v: 0 for v in range(1, p + 1)}

    def visit(v):
        color[v] = 1
        for w in out[v]:
            if color[w] == 1:
                return False
            if color[w] == 0 and not visit(w):
                return False
        color[v] = 2
        return True

    return all(color[v] != 0 or visit(v) for v in range(1, p + 1))


class TestIsAcyclic:
    def test_empty(self):
        assert is_acyclic(3, [])

    def test_two_cycle(self):
        assert not is_acyclic(2, [(1, 2), (2, 1)])

    def test_three_cycle(self):
        assert not is_acyclic(3, [(1, 2), (2, 3), (3, 1)])

    def test_lower_triangular_random(self, rng):
        p = 10
        for _ in range(25):
            edges = [
                (j, i)
                for i in range(2, p + 1)
                for j in range(1, i)
                if rng.random() < 0.4
            ]
            assert is_acyclic(p, edges)
            assert topo_order_exists(p, edges)

    def test_agrees_with_dfs_oracle(self, rng):
        p = 6
        for _ in range(200):
            edges = {
                (int(a), int(b))
                for a, b in rng.integers(1, p + 1, size=(8, 2))
                if a != b
            }
            assert is_acyclic(p, edges) == topo_order_exists(p, edges)


class TestDagValidation:
    def test_rejects_cycle(self):
        with pytest.raises(InvalidInputError):
            Dag(2, [(1, 2), (2, 1)])

    def test_rejects_self_loop(self):
        with pytest.raises(InvalidInputError):
            Dag(2, [(1, 1)])

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidInputError):
            Dag(2, [(1, 3)])


class TestPdagValidation:
    def test_rejects_overlap(self):
        with pytest.raises(InvalidInputError):
            Pdag(3, directed=[(1, 2)], undirected=[(2, 1)])

    def test_rejects_two_cycle(self):
        with pytest.raises(InvalidInputError):
            Pdag(3, directed=[(1, 2), (2, 1)])

    def test_normalizes_undirected(self):
        g = Pdag(3, undirected=[(3, 1)])
        assert g.undirected == frozenset({(1, 3)})


class TestDagToCpdag:
    def test_chain_becomes_undirected(self):
        got = dag_to_cpdag(Dag(3, [(1, 2), (2, 3)]))
        assert got.directed == frozenset()
        assert got.undirected == frozenset({(1, 2), (2, 3)})

    def test_chain_class_has_three_members(self):
        chain = Dag(3, [(1, 2), (2, 3)])
        sig = (chain.skeleton_pairs(), v_structures(chain))
        members = {
            tuple(sorted(g.edges))
            for g in all_dags(3)
            if (g.skeleton_pairs(), v_structures(g)) == sig
        }
        assert members == {
            ((1, 2), (2, 3)),
            ((2, 1), (3, 2)),
            ((2, 1), (2, 3)),
        }

    def test_collider_stays_directed(self):
        got = dag_to_cpdag(Dag(3, [(1, 3), (2, 3)]))
        assert got.directed == frozenset({(1, 3), (2, 3)})
        assert got.undirected == frozenset()

    def test_single_edge_undirected(self):
        got = dag_to_cpdag(Dag(2, [(1, 2)]))
        assert got.undirected == frozenset({(1, 2)})

    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_matches_enumeration_oracle(self, p):
        for dag in all_dags(p):
            assert dag_to_cpdag(dag) == cpdag_by_enumeration(dag)

    def test_all_25_dags_on_three_nodes(self):
        assert sum(1 for _ in all_dags(3)) == 25

    def test_equal_cpdag_iff_same_skeleton_and_vstructures(self):
        dags = list(all_dags(3))
        for g1 in dags:
            for g2 in dags:
                same_class = (
                    g1.skeleton_pairs() == g2.skeleton_pairs()
                    and v_structures(g1) == v_structures(g2)
                )
                assert (dag_to_cpdag(g1) == dag_to_cpdag(g2)) == same_class

    def test_skeleton_preserved(self, rng):
        for _ in range(30):
            p = int(rng.integers(2, 7))
            edges = [
                (j, i)
                for i in range(2, p + 1)
                for j in range(1, i)
                if rng.random() < 0.5
            ]
            dag = Dag(p, edges)
            assert dag_to_cpdag(dag).skeleton_pairs() == dag.skeleton_pairs()

    def test_validate_passes_on_outputs(self, rng):
        for _ in range(20):
            p = int(rng.integers(2, 6))
            edges = [
                (j, i)
                for i in range(2, p + 1)
                for j in range(1, i)
                if rng.random() < 0.5
            ]
            dag_to_cpdag(Dag(p, edges)).validate()


@st.composite
def random_dag(draw, max_p=5):
    p = draw(st.integers(2, max_p))
    mask = draw(st.lists(st.booleans(), min_size=p * (p - 1) // 2,
                         max_size=p * (p - 1) // 2))
    pairs = [(j, i) for i in range(2, p + 1) for j in range(1, i)]
    return Dag(p, (e for e, keep in zip(pairs, mask) if keep))


class TestRelabelingInvariance:
    @given(random_dag(), st.randoms(use_true_random=False))
    @settings(max_examples=60, deadline=None)
    def test_cpdag_commutes_with_permutation(self, dag, rnd):
        labels = list(range(1, dag.p + 1))
        shuffled = labels[:]
        rnd.shuffle(shuffled)
        perm = dict(zip(labels, shuffled))
        assert dag_to_cpdag(dag.relabel(perm)) == dag_to_cpdag(dag).relabel(perm)


class TestMeekRules:
    def test_rule1(self):
        got = apply_meek_rules(Pdag(3, [(1, 2)], [(2, 3)]))
        assert got.directed == frozenset({(1, 2), (2, 3)})

    def test_rule2(self):
        got = apply_meek_rules(Pdag(3, [(1, 2), (2, 3)], [(1, 3)]))
        assert (1, 3) in got.directed

    def test_rule3(self):
        g = Pdag(4, [(3, 2), (4, 2)], [(1, 2), (1, 3), (1, 4)])
        got = apply_meek_rules(g)
        assert (1, 2) in got.directed

    def test_rule4(self):
        g = Pdag(4, [(3, 4), (4, 2)], [(1, 2), (1, 3), (1, 4)])
        got = apply_meek_rules(g)
        assert (1, 2) in got.directed

    def test_no_rule_fires_on_plain_edge(self):
        g = Pdag(2, [], [(1, 2)])
        assert apply_meek_rules(g) == g

    def test_idempotent_on_cpdags(self, rng):
        for _ in range(30):
            p = int(rng.integers(2, 6))
            edges = [
                (j, i)
                for i in range(2, p + 1)
                for j in range(1, i)
                if rng.random() < 0.5
            ]
            c = dag_to_cpdag(Dag(p, edges))
            g = Pdag(c.p, c.directed, c.undirected)
            assert apply_meek_rules(g) == g

    def test_monotone_never_unorients(self, rng):
        for _ in range(40):
            p = int(rng.integers(3, 6))
            directed, undirected = set(), set()
            for a, b in combinations(range(1, p + 1), 2):
                u = rng.random()
                if u < 0.25:
                    directed.add((a, b))
                elif u < 0.4:
                    undirected.add((a, b))
            if not is_acyclic(p, directed):
                continue
            g = Pdag(p, directed, undirected)
            closed = apply_meek_rules(g)
            assert g.directed <= closed.directed
            assert closed.skeleton_pairs() == g.skeleton_pairs()


class TestTextFormat:
    def test_round_trip_pdag(self):
        g = Pdag(4, [(1, 2), (3, 2)], [(2, 4), (1, 3)])
        assert parse_pdag(format_graph(g)) == g

    def test_round_trip_dag(self):
        g = Dag(3, [(1, 3), (2, 3)])
        assert parse_dag(format_graph(g)) == g

    def test_comments_and_whitespace(self):
        text = "# learned structure\n 3 \n\n1 ->   2\n# middle\n2 -- 3\n"
        g = parse_pdag(text)
        assert g.directed == frozenset({(1, 2)})
        assert g.undirected == frozenset({(2, 3)})

    def test_bad_edge_line(self):
        with pytest.raises(InvalidInputError):
            parse_pdag("2\n1 => 2\n")

    def test_dag_rejects_undirected(self):
        with pytest.raises(InvalidInputError):
            parse_dag("2\n1 -- 2\n")

    def test_empty_text(self):
        with pytest.raises(InvalidInputError):
            parse_pdag("   \n# only comments\n")
