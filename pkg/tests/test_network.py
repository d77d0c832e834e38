import pytest

from edue.grid import TimeGrid
from edue.network import Link, Network, Path, StructureError, max_exit_capacity, validate


def make_net(links, paths, target=1.5):
    return Network(links=tuple(links), paths=tuple(paths), arrival_target=target)


class TestValidate:
    def test_minimal_valid_network(self):
        net = make_net(
            [Link("a", "i", "j", 0.2, 1800.0)],
            [Path("p", ("a",), "i", "j")],
            target=1.5,
        )
        assert validate(net, TimeGrid(0.0, 2.0, 4)) == []

    def test_nonpositive_capacity(self):
        net = make_net([Link("a", "i", "j", 0.2, 0.0)], [Path("p", ("a",), "i", "j")])
        report = validate(net, TimeGrid(0.0, 2.0, 4))
        assert any("nonpositive capacity" in v for v in report)

    def test_arrival_target_must_precede_horizon_end(self):
        net = make_net(
            [Link("a", "i", "j", 0.2, 100.0)],
            [Path("p", ("a",), "i", "j")],
            target=2.0,
        )
        report = validate(net, TimeGrid(0.0, 2.0, 4))
        assert any("arrival time must precede" in v for v in report)

    def test_disconnected_path(self):
        links = [Link("a", "i", "k", 0.1, 100.0), Link("b", "m", "j", 0.1, 100.0)]
        net = make_net(links, [Path("p", ("a", "b"), "i", "j")])
        report = validate(net, TimeGrid(0.0, 2.0, 4))
        assert any("not adjacent" in v for v in report)

    def test_unknown_link_reference(self):
        net = make_net([Link("a", "i", "j", 0.1, 100.0)], [Path("p", ("zz",), "i", "j")])
        report = validate(net, TimeGrid(0.0, 2.0, 4))
        assert any("unknown links" in v for v in report)

    def test_repeated_link(self):
        net = make_net(
            [Link("a", "i", "i", 0.1, 100.0)], [Path("p", ("a", "a"), "i", "i")]
        )
        report = validate(net, TimeGrid(0.0, 2.0, 4))
        assert any("repeated link" in v for v in report)


class TestMaxExitCapacity:
    def test_max_of_two(self):
        net = make_net(
            [Link("a", "i", "j", 0.1, 1800.0), Link("b", "j", "k", 0.1, 1200.0)],
            [Path("p", ("a", "b"), "i", "k")],
        )
        assert max_exit_capacity(net) == 1800.0

    def test_singleton(self):
        net = make_net([Link("a", "i", "j", 0.1, 600.0)], [Path("p", ("a",), "i", "j")])
        assert max_exit_capacity(net) == 600.0

    def test_ties(self):
        net = make_net(
            [Link("a", "i", "j", 0.1, 1000.0), Link("b", "j", "k", 0.1, 1000.0)],
            [Path("p", ("a", "b"), "i", "k")],
        )
        assert max_exit_capacity(net) == 1000.0

    def test_empty_links_rejected(self):
        with pytest.raises(StructureError):
            max_exit_capacity(Network(links=(), paths=(), arrival_target=1.0))

    def test_bound_dominates_each_link(self):
        links = [Link(f"l{i}", "a", "b", 0.1, 100.0 * (i + 1)) for i in range(5)]
        net = make_net(links, [Path("p", ("l0",), "a", "b")])
        cap = max_exit_capacity(net)
        assert all(cap >= l.exit_capacity for l in links)


class TestStructure:
    def test_duplicate_link_ids_rejected(self):
        with pytest.raises(StructureError):
            make_net(
                [Link("a", "i", "j", 0.1, 1.0), Link("a", "j", "k", 0.1, 1.0)],
                [Path("p", ("a",), "i", "j")],
            )

    def test_od_paths_sorted_by_path_id(self):
        links = [
            Link("a1", "O", "D", 0.1, 10.0),
            Link("a2", "O", "D", 0.1, 10.0),
        ]
        paths = [Path("pB", ("a2",), "O", "D"), Path("pA", ("a1",), "O", "D")]
        net = make_net(links, paths)
        (od,) = net.od_paths
        assert [net.paths[i].id for i in od] == ["pA", "pB"]
