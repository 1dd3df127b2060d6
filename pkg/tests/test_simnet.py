import pytest

from tcash import TOY
from tcash.coinmodel import serialize_instance
from tcash.ledger import KeyRegistry
from tcash.scenario import ScenarioEngine, ScenarioError, parse_scenario
from tcash.simnet import Network, SimConfig


def make_net(
    coin_factory,
    seed=3,
    num_nodes=3,
    miners=(0,),
    delay=("fixed", 1),
    difficulty=8,
    mine_budget=500,
):
    config = SimConfig(
        profile=TOY,
        num_nodes=num_nodes,
        miners=miners,
        difficulty=difficulty,
        confirm_depth=1,
        seed=seed,
        delay=delay,
        mine_budget=mine_budget,
    )
    return Network(config, coin_factory.registry)


class TestBroadcast:
    def test_valid_instance_reaches_every_mempool(self, coin_factory):
        net = make_net(coin_factory, delay=("fixed", 2), mine_budget=1)
        inst, _ = coin_factory.genesis()
        net.broadcast_instance(serialize_instance(inst, TOY))
        net.step(3)  # delivered at tick 2, long before the slow miner seals
        assert all(len(n.mempool) == 1 for n in net.nodes)

    def test_invalid_instance_rejected_everywhere(self, coin_factory):
        from tcash.coinmodel import CoinInstance

        net = make_net(coin_factory)
        inst, _ = coin_factory.genesis()
        forged = CoinInstance(tx=inst.tx, sig=(inst.sig + 1) % inst.tx.key_n)
        net.broadcast_instance(serialize_instance(forged, TOY))
        net.step(3)
        assert all(not n.mempool for n in net.nodes)
        assert all(any("bad-signature" in line for line in n.reject_log) for n in net.nodes)

    def test_conflicting_instances_first_seen_wins(self, coin_factory):
        net = make_net(coin_factory, num_nodes=2, miners=(0,), mine_budget=1)
        inst, secrets = coin_factory.genesis()
        net.broadcast_instance(serialize_instance(inst, TOY))
        net.run_until(lambda: all(n.chain.best_height == 1 for n in net.nodes), 2000)
        child1, _ = coin_factory.transfer(inst, secrets)
        child2, _ = coin_factory.transfer(inst, secrets)
        raw1 = serialize_instance(child1, TOY)
        raw2 = serialize_instance(child2, TOY)
        # staggered: node 0 sees child1 first, node 1 sees child2 first
        net.schedule(1, "inst", 0, raw1)
        net.schedule(2, "inst", 0, raw2)
        net.schedule(1, "inst", 1, raw2)
        net.schedule(2, "inst", 1, raw1)
        net.step(3)
        pool0 = [item.inst for item in net.nodes[0].mempool.values()]
        pool1 = [item.inst for item in net.nodes[1].mempool.values()]
        assert pool0 == [child1]
        assert pool1 == [child2]
        assert any("conflict-first-seen" in line for line in net.nodes[0].reject_log)
        assert any("conflict-first-seen" in line for line in net.nodes[1].reject_log)


class TestMiningConvergence:
    def test_mint_only_all_nodes_converge(self, coin_factory):
        net = make_net(coin_factory)
        inst, _ = coin_factory.genesis()
        net.broadcast_instance(serialize_instance(inst, TOY))
        assert net.run_to_quiescence()
        assert net.converged()
        for node in net.nodes:
            assert node.chain.best_height == 1
            assert len(node.chain.instances_of(inst.tx.coin_id)) == 1

    def test_ten_hop_chain(self, coin_factory):
        net = make_net(coin_factory)
        inst, secrets = coin_factory.genesis()
        net.broadcast_instance(serialize_instance(inst, TOY))
        net.run_to_quiescence()
        latest = inst
        for _ in range(10):
            latest, secrets = coin_factory.transfer(latest, secrets)
            net.broadcast_instance(serialize_instance(latest, TOY))
            net.run_to_quiescence()
        assert net.converged()
        assert all(
            len(n.chain.instances_of(inst.tx.coin_id)) == 11 for n in net.nodes
        )

    def test_late_instance_parks_until_parent_block_arrives(self, coin_factory):
        # node 1 receives the transfer before the block holding its parent
        net = make_net(coin_factory, num_nodes=2, miners=(0,), delay=("fixed", 1))
        inst, secrets = coin_factory.genesis()
        child, _ = coin_factory.transfer(inst, secrets)
        net.schedule(1, "inst", 0, serialize_instance(inst, TOY))
        net.schedule(1, "inst", 1, serialize_instance(child, TOY))  # too early at node 1
        net.schedule(30, "inst", 0, serialize_instance(child, TOY))
        net.schedule(30, "inst", 1, serialize_instance(inst, TOY))
        assert net.run_to_quiescence()
        assert net.converged()
        assert all(len(n.chain.instances_of(inst.tx.coin_id)) == 2 for n in net.nodes)


class TestDeterminism:
    def test_identical_seeds_identical_reports(self):
        text = (
            "config nodes 3\nconfig miners 0,1,2\nconfig delay uniform:1:4\n"
            "bank b\naccount alice b 1000\nwallet alice\nwallet bob\n"
            "mint alice c 1000\ntransfer alice bob c\nassert-balance bob 1000\n"
        )
        r1 = ScenarioEngine(text, TOY, seed=5, difficulty=10, confirm_depth=1).run()
        r2 = ScenarioEngine(text, TOY, seed=5, difficulty=10, confirm_depth=1).run()
        assert r1.report == r2.report
        assert r1.ledger_bytes == r2.ledger_bytes
        assert r1.keys_mapping == r2.keys_mapping
        r3 = ScenarioEngine(text, TOY, seed=6, difficulty=10, confirm_depth=1).run()
        assert r3.ledger_bytes != r1.ledger_bytes

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            SimConfig(profile=TOY, miners=())
        with pytest.raises(ValueError):
            SimConfig(profile=TOY, num_nodes=2, miners=(5,))


class TestScenarioParsing:
    def test_unknown_command_names_line(self):
        with pytest.raises(ScenarioError) as err:
            parse_scenario("bank b\nfrobnicate x\n")
        assert err.value.line_no == 2

    def test_wrong_arity(self):
        with pytest.raises(ScenarioError):
            parse_scenario("mint alice\n")

    def test_comments_and_blanks_skipped(self):
        commands = parse_scenario("# hi\n\nbank b # trailing\n")
        assert len(commands) == 1
        assert commands[0].args == ("b",)

    def test_unknown_actor_aborts_with_position(self):
        with pytest.raises(ScenarioError) as err:
            ScenarioEngine("mint ghost c 500\n", TOY, seed=1).run()
        assert err.value.line_no == 1


class TestScenarioEngine:
    def test_confirm_depth_two_still_settles(self):
        text = (
            "bank b\naccount alice b 1000\nwallet alice\nwallet bob\n"
            "mint alice c 1000\ntransfer alice bob c\nassert-balance bob 1000\n"
        )
        result = ScenarioEngine(text, TOY, seed=5, difficulty=8, confirm_depth=2).run()
        assert result.ok, result.report

    def test_double_spend_exactly_one_winner(self):
        from importlib import resources

        text = resources.files("tcash.scenarios").joinpath("double_spend.txt").read_text()
        for seed in (1, 2, 3):
            result = ScenarioEngine(text, TOY, seed=seed, difficulty=10, confirm_depth=1).run()
            assert result.ok, result.report
            assert "confirmed=1/2" in result.report

    def test_escrow_checked_after_every_protocol_command(self):
        from importlib import resources

        text = resources.files("tcash.scenarios").joinpath("transfer_chain.txt").read_text()
        result = ScenarioEngine(text, TOY, seed=4, difficulty=8, confirm_depth=1).run()
        assert result.ok
        assert result.escrow_checks_total == 12  # mint + 10 transfers + redeem
        assert result.escrow_checks_passed == 12
