"""Tests for the decentralized executor."""

import pytest

from trustexec.crypto.primitives import SealedBlob, unseal
from trustexec.data.proof_log import trace_lineage, verify_chain
from trustexec.exceptions import (
    AttestationFailed,
    AuthFailure,
    BudgetExhausted,
    InsufficientNodes,
    MissingDpGate,
    StepFailed,
    TaskSyntaxError,
)
from trustexec.executor import query_of
from trustexec.lambdas.base import PassthroughFunction
from trustexec.lambdas.release import read_inbox
from trustexec.models.proof import LambdaKind, Verdict
from trustexec.models.task import BuiltinTask
from trustexec.netsim.node import FaultBehavior, FaultKind
from trustexec.taskdsl import parse


def _fedavg_entries(vectors):
    return [
        {"pod": i, "source": "hardware_signed", "payload": {"weights": v}}
        for i, v in enumerate(vectors)
    ]


class TestPlanning:
    """Tests for pipeline derivation."""

    def test_dp_pipeline(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries)
        plan = make_executor(network).plan_pipeline(make_spec(network))
        assert plan.kinds == [LambdaKind.DATA_PROVER, LambdaKind.TASK_EXEC, LambdaKind.DP_GATE]

    def test_no_dp(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries)
        plan = make_executor(network).plan_pipeline(make_spec(network, require_dp=False))
        assert plan.kinds == [LambdaKind.DATA_PROVER, LambdaKind.TASK_EXEC]

    def test_fedavg_pipeline(self, make_network, make_executor, make_spec):
        network = make_network(_fedavg_entries([[0.0]]))
        spec = make_spec(network, code=None, builtin=BuiltinTask.FEDAVG, clip_lo=-1.0, clip_hi=1.0)
        plan = make_executor(network).plan_pipeline(spec)
        assert plan.kinds == [LambdaKind.DATA_PROVER, LambdaKind.AGGREGATOR, LambdaKind.DP_GATE]

    def test_fedavg_dp_needs_clip(self, make_network, make_executor, make_spec):
        network = make_network(_fedavg_entries([[0.0]]))
        spec = make_spec(network, code=None, builtin=BuiltinTask.FEDAVG)
        with pytest.raises(MissingDpGate):
            make_executor(network).plan_pipeline(spec)

    @pytest.mark.parametrize(
        "clip", [(-1.0, float("inf")), (float("-inf"), 1.0), (float("nan"), 1.0), (2.0, 1.0)]
    )
    @pytest.mark.parametrize("require_dp", [True, False])
    def test_fedavg_clip_must_be_finite(self, make_network, make_executor, make_spec, clip, require_dp):
        network = make_network(_fedavg_entries([[0.0]]))
        spec = make_spec(
            network,
            code=None,
            builtin=BuiltinTask.FEDAVG,
            clip_lo=clip[0],
            clip_hi=clip[1],
            require_dp=require_dp,
        )
        executor = make_executor(network)
        with pytest.raises(MissingDpGate):
            executor.plan_pipeline(spec)

    def test_unbounded_sum_fails_before_budget(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries)
        executor = make_executor(network)
        spec = make_spec(network, code="sum(purchases.price, 0, 1e999)")
        with pytest.raises(TaskSyntaxError):
            executor.run_task(spec)
        assert all(executor.ledger.spent(p.party_id) == 0.0 for p in network.pods)
        assert len(executor.log) == 0

    def test_explicit_kinds_without_gate(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries)
        spec = make_spec(
            network, pipeline_kinds=[LambdaKind.DATA_PROVER, LambdaKind.TASK_EXEC]
        )
        with pytest.raises(MissingDpGate):
            make_executor(network).plan_pipeline(spec)

    def test_query_of(self):
        assert query_of(parse("count(x)")) == "count"
        assert query_of(parse("x > 1")) == "count"
        assert query_of(parse("mean(x, 0, 1)")) == "mean"
        with pytest.raises(MissingDpGate):
            query_of(parse("x"))

    def test_plan_hides_task_source(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries)
        plan = make_executor(network).plan_pipeline(make_spec(network))
        assert "nintendo" not in str(plan.to_dict())


class TestKeyChain:
    """Tests for attestation and edge-key delivery."""

    @pytest.fixture
    def setup(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries)
        executor = make_executor(network)
        plan = executor.plan_pipeline(make_spec(network))
        executor.recruit_instances(plan)
        return network, executor, plan

    def test_key_possession(self, setup):
        network, executor, plan = setup
        pods = network.pods
        chain = executor.owner_attest_and_keygen(plan, pods)
        ids = [s.instance_id for s in plan.steps]
        n = len(plan.steps)

        assert len(chain.edge_keys) == n + 1
        assert chain.holders(chain.edge_keys[0].key_id) == [p.party_id for p in pods] + [ids[0]]
        for i in range(1, n):
            assert chain.holders(chain.edge_keys[i].key_id) == [ids[i - 1], ids[i]]
        assert chain.holders(chain.edge_keys[n].key_id) == [ids[n - 1], plan.consumer]
        assert plan.edge_key_ids == [k.key_id for k in chain.edge_keys]

    def test_consumer_holds_only_final_key(self, setup):
        network, executor, plan = setup
        chain = executor.owner_attest_and_keygen(plan, network.pods)
        assert list(network.consumer.keys) == [chain.egress.key_id]

    def test_attestation_failure_releases_nothing(self, setup):
        network, executor, plan = setup
        node = network.node(plan.steps[1].node_id)
        node.instance.function = PassthroughFunction(LambdaKind.TASK_EXEC)

        with pytest.raises(AttestationFailed) as exc:
            executor.owner_attest_and_keygen(plan, network.pods)

        assert exc.value.step_index == 1
        assert all(not p.keys for p in network.pods)
        assert all(n.instance.ingress_key is None for n in network.executors if n.instance)

    def test_task_code_is_sealed_to_enclave(self, setup):
        network, _, plan = setup
        node = network.node(plan.steps[1].node_id)
        [(channel, data)] = [e for e in node.observations.entries() if e[0] == "task-code"]
        blob = SealedBlob.from_bytes(data)
        assert blob.recipient == plan.steps[1].instance_id
        assert b"nintendo" not in data
        with pytest.raises(AuthFailure):
            unseal(node.keypair, blob)


class TestRunTask:
    """End-to-end task runs."""

    def test_ads_count(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries)
        executor = make_executor(network)
        result = executor.run_task(make_spec(network))

        assert result.query == "count"
        assert result.released_value == 2.0
        assert result.auth_summary == {"Verified": 5, "Alleged": 1, "Rejected": 0}
        assert result.alleged_flag
        assert result.epsilon_charged == 1.0
        assert result.pods_charged == 6
        assert verify_chain(executor.log, result.task_id, executor.plans[result.task_id]).all_ok

    def test_ad_delivery(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries)
        spec = make_spec(network, ad_message="console sale")
        result = make_executor(network).run_task(spec)

        assert len(result.deliveries) == len(network.pods)
        assert len({len(b.to_bytes()) for b in result.deliveries}) == 1
        inbox = {b.recipient: b for b in result.deliveries}
        messages = [read_inbox(p.keypair, inbox[p.party_id]) for p in network.pods]
        assert messages == ["console sale", None, None, "console sale", None, None]
        with pytest.raises(AuthFailure):
            read_inbox(network.consumer.keypair, result.deliveries[0])

    def test_mean_without_dp(self, make_network, make_executor, make_spec):
        entries = [{"pod": i, "source": "org_signed", "payload": {"v": 2 * i}} for i in range(4)]
        network = make_network(entries)
        spec = make_spec(network, code="mean(v, 0, 10)", require_dp=False)
        result = make_executor(network).run_task(spec)
        assert result.released_value == 3.0
        assert result.epsilon_charged == 0.0

    def test_fedavg(self, make_network, make_executor, make_spec):
        network = make_network(_fedavg_entries([[1, 1], [3, 3]]))
        spec = make_spec(network, code=None, builtin=BuiltinTask.FEDAVG, require_dp=False)
        result = make_executor(network).run_task(spec)
        assert result.query == "vector_mean"
        assert result.released_value == [2.0, 2.0]

    def test_fedavg_with_gate(self, make_network, make_executor, make_spec):
        network = make_network(_fedavg_entries([[0.5, -0.5], [1.5, -1.5]]))
        spec = make_spec(
            network, code=None, builtin=BuiltinTask.FEDAVG, clip_lo=-1.0, clip_hi=1.0, dim=2
        )
        result = make_executor(network).run_task(spec)
        assert result.released_value == [0.75, -0.75]
        assert result.scale == pytest.approx(2 * 2.0 / 2)

    def test_selector(self, make_network, make_executor, make_spec, ads_entries):
        ads_entries[0]["tags"] = {"opted_in": False}
        ads_entries[1]["tags"] = {}
        network = make_network(ads_entries)
        executor = make_executor(network)
        result = executor.run_task(make_spec(network, selector="opted_in == true"))
        assert result.pods_charged == 4
        assert result.released_value == 1.0

    def test_budget_exhausted_before_any_step(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries)
        executor = make_executor(network, budget=0.5)
        with pytest.raises(BudgetExhausted):
            executor.run_task(make_spec(network))
        assert len(executor.log) == 0
        assert not any(n.busy for n in network.executors)

    def test_insufficient_nodes(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries, node_count=2, high_assurance=0)
        with pytest.raises(InsufficientNodes):
            make_executor(network).run_task(make_spec(network))
        assert not any(n.busy for n in network.executors)

    def test_lineage(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries)
        executor = make_executor(network)
        result = executor.run_task(make_spec(network))

        tree = trace_lineage(executor.log, result.output_digest)

        assert [e.kind for e in tree.edges] == [
            LambdaKind.DP_GATE,
            LambdaKind.TASK_EXEC,
            LambdaKind.DATA_PROVER,
        ]
        assert tree.leaves == executor.batch_digests[result.task_id]
        assert tree.auth_summary == {"Verified": 5, "Alleged": 1, "Rejected": 0}

    def test_run_many(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries, node_count=6)
        executor = make_executor(network, budget=1.5)
        specs = [make_spec(network, task_byte=b) for b in (1, 2)]
        results = executor.run_many(specs, max_workers=2)
        assert sum(isinstance(r, BudgetExhausted) for r in results) == 1
        assert sum(getattr(r, "released_value", None) == 2.0 for r in results) == 1


class TestFaults:
    """Misbehaving hosts are pinpointed by the proof chain."""

    def _run(self, make_network, make_executor, make_spec, ads_entries, behavior):
        network = make_network(ads_entries)
        network.inject_fault(None, behavior)
        executor = make_executor(network)
        spec = make_spec(network)
        with pytest.raises(StepFailed) as exc:
            executor.run_task(spec)
        report = verify_chain(executor.log, spec.task_id, executor.plans[spec.task_id])
        return exc.value, report

    @pytest.mark.parametrize("step", [0, 1, 2])
    def test_tamper_output(self, make_network, make_executor, make_spec, ads_entries, step):
        failed, report = self._run(
            make_network, make_executor, make_spec, ads_entries,
            FaultBehavior(FaultKind.TAMPER_OUTPUT, step=step),
        )
        assert failed.index == step + 1
        assert failed.reason == "DIGEST_MISMATCH"
        assert report.first_bad_step == step + 1
        assert report.culprit_step == step

    @pytest.mark.parametrize("step", [0, 1, 2])
    def test_forge_proof(self, make_network, make_executor, make_spec, ads_entries, step):
        failed, report = self._run(
            make_network, make_executor, make_spec, ads_entries,
            FaultBehavior(FaultKind.FORGE_PROOF, step=step),
        )
        assert failed.reason == "MISSING_PREDECESSOR"
        assert report.steps[step].verdict is Verdict.MISSING_PROOF
        assert report.culprit_step == step

    @pytest.mark.parametrize("step", [0, 1])
    def test_wrong_function(self, make_network, make_executor, make_spec, ads_entries, step):
        failed, report = self._run(
            make_network, make_executor, make_spec, ads_entries,
            FaultBehavior(FaultKind.WRONG_FUNCTION, step=step),
        )
        assert failed.index == step + 1
        assert failed.reason == "UPSTREAM_WRONG_FUNCTION"
        assert report.steps[step].verdict is Verdict.WRONG_FUNCTION
        assert report.culprit_step == step

    def test_skip_dp_never_releases(self, make_network, make_executor, make_spec, ads_entries):
        failed, report = self._run(
            make_network, make_executor, make_spec, ads_entries, FaultBehavior(FaultKind.SKIP_DP)
        )
        assert failed.index == 3
        assert report.steps[2].verdict is Verdict.WRONG_FUNCTION
        assert report.steps[3].verdict is Verdict.FAILED_STEP

    @pytest.mark.parametrize("step", [0, 1])
    def test_replay_sealed(self, make_network, make_executor, make_spec, ads_entries, step):
        failed, report = self._run(
            make_network, make_executor, make_spec, ads_entries,
            FaultBehavior(FaultKind.REPLAY_SEALED, step=step),
        )
        assert failed.index == step + 1
        assert failed.reason == "AUTH_FAILURE"
        assert report.culprit_step == step

    def test_fake_data_is_rejected(self, make_network, make_executor, make_spec, ads_entries):
        network = make_network(ads_entries)
        network.inject_fault("pod-0", FaultBehavior(FaultKind.FAKE_DATA, pod=0))
        result = make_executor(network).run_task(make_spec(network))
        assert result.auth_summary["Rejected"] == 1
        assert result.released_value == 1.0
