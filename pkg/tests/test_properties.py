"""Seeded randomized checks of the system-wide guarantees."""

import threading
from concurrent.futures import ThreadPoolExecutor

import pytest

from trustexec.crypto.primitives import EdgeKey, KeyPair, open_with, seal_with, sign
from trustexec.data.proof_log import verify_chain
from trustexec.exceptions import AuthFailure, BudgetExhausted, StepFailed
from trustexec.lambdas.budget import TOLERANCE, BudgetLedger
from trustexec.lambdas.data_prover import prover_lambda_fn
from trustexec.models.records import AuthVerdict, DataRecord, SourceKind
from trustexec.netsim import FaultBehavior, FaultKind
from trustexec.rng import SimulationRandom

SEEDS = range(6)
MATRIX_SEEDS = range(20)
SECRET_ALPHABET = "ghijklmnopqrstuvwxyz"
STEP_FAULTS = [
    FaultKind.TAMPER_OUTPUT,
    FaultKind.FORGE_PROOF,
    FaultKind.WRONG_FUNCTION,
    FaultKind.REPLAY_SEALED,
]


def _secret_entries(rng, pods=4):
    """Records whose payload carries a letters-only secret that no hex or digest text can contain."""
    entries, secrets = [], []
    for i in range(pods):
        secret = "".join(SECRET_ALPHABET[rng.randrange(len(SECRET_ALPHABET))] for _ in range(24))
        secrets.append(secret.encode())
        entries.append(
            {
                "pod": i,
                "tags": {"opted_in": True},
                "source": "org_signed",
                "payload": {"note": secret, "purchases": [{"item": "kettle", "price": i}]},
            }
        )
    return entries, secrets


class TestNoPlaintextLeak:
    """
    Eavesdroppers on every executor never see a record in the clear, and
    nothing the proof log stores carries one either.

    The secret rides in each record's payload, so it is part of the data
    prover's intermediate output as well as the POD input.
    """

    def _run_and_check(self, make_network, make_executor, make_spec, seed, pods=4):
        rng = SimulationRandom(seed).stream("secrets")
        entries, secrets = _secret_entries(rng, pods)
        network = make_network(entries, seed=seed)
        for node in network.executors:
            network.inject_fault(node.node_id, FaultBehavior(FaultKind.EAVESDROP_ALL))

        executor = make_executor(network, log_name=f"leak-{seed}.log")
        executor.run_task(make_spec(network))

        for node in network.nodes:
            if node in network.pods:
                continue
            for secret in secrets:
                assert not node.observations.leaks_window(secret)

        stored = executor.log.path.read_bytes()
        if executor.log.lineage_path.exists():
            stored += executor.log.lineage_path.read_bytes()
        for secret in secrets:
            assert not any(secret[i : i + 8] in stored for i in range(len(secret) - 7))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_secrets_stay_sealed(self, make_network, make_executor, make_spec, seed):
        self._run_and_check(make_network, make_executor, make_spec, seed)

    @pytest.mark.parametrize("block", range(10))
    def test_thousand_runs(self, make_network, make_executor, make_spec, block):
        for seed in range(1000 + block * 100, 1000 + (block + 1) * 100):
            pods = 1 + SimulationRandom(seed).stream("pods").randrange(4)
            self._run_and_check(make_network, make_executor, make_spec, seed, pods)


class TestChainSoundness:
    """Honest runs verify; tampered runs name the tamperer."""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_fault_free_chain_verifies(
        self, make_network, make_executor, make_spec, ads_entries, seed
    ):
        network = make_network(ads_entries, seed=seed)
        executor = make_executor(network, log_name=f"ok-{seed}.log")
        spec = make_spec(network, task_byte=seed + 1)
        executor.run_task(spec)
        assert verify_chain(executor.log, spec.task_id, executor.plans[spec.task_id]).all_ok

    def _attacked(self, make_network, make_executor, make_spec, ads_entries, seed, behavior):
        network = make_network(ads_entries, seed=seed)
        network.inject_fault(None, behavior)
        executor = make_executor(network, log_name=f"{behavior.kind.value}-{seed}.log")
        spec = make_spec(network)

        with pytest.raises(StepFailed):
            executor.run_task(spec)

        assert any(p.is_failure for p in executor.log.proofs(spec.task_id))
        return verify_chain(executor.log, spec.task_id, executor.plans[spec.task_id])

    @pytest.mark.parametrize("seed", MATRIX_SEEDS)
    @pytest.mark.parametrize("step", [0, 1, 2])
    @pytest.mark.parametrize("kind", STEP_FAULTS, ids=lambda k: k.value)
    def test_step_fault_is_pinpointed(
        self, make_network, make_executor, make_spec, ads_entries, kind, step, seed
    ):
        report = self._attacked(
            make_network, make_executor, make_spec, ads_entries, seed,
            FaultBehavior(kind, step=step),
        )
        assert not report.all_ok
        assert report.culprit_step == step

    @pytest.mark.parametrize("seed", MATRIX_SEEDS)
    def test_skipped_gate_is_pinpointed(
        self, make_network, make_executor, make_spec, ads_entries, seed
    ):
        report = self._attacked(
            make_network, make_executor, make_spec, ads_entries, seed,
            FaultBehavior(FaultKind.SKIP_DP),
        )
        assert report.culprit_step == 2

    @pytest.mark.parametrize("seed", MATRIX_SEEDS)
    def test_fake_data_never_counts(
        self, make_network, make_executor, make_spec, ads_entries, seed
    ):
        pod = SimulationRandom(seed).stream("fake").randrange(5)
        network = make_network(ads_entries, seed=seed)
        network.inject_fault(f"pod-{pod}", FaultBehavior(FaultKind.FAKE_DATA, pod=pod))
        executor = make_executor(network, log_name=f"fake-{seed}.log")
        spec = make_spec(network)

        result = executor.run_task(spec)

        assert result.auth_summary["Rejected"] == 1
        assert result.released_value == (1.0 if pod in (0, 3) else 2.0)
        assert verify_chain(executor.log, spec.task_id, executor.plans[spec.task_id]).all_ok


class TestBudgetNeverNegative:
    """Random charge sequences never overdraw any POD."""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_random_charges(self, seed):
        rng = SimulationRandom(seed).stream("budget")
        pods = [f"p{i}" for i in range(5)]
        ledger = BudgetLedger(3.0)
        for _ in range(40):
            chosen = rng.sample(pods, 1 + rng.randrange(len(pods)))
            before = {p: ledger.remaining(p) for p in pods}
            try:
                ledger.charge(chosen, 0.05 + 1.45 * rng.random())
            except BudgetExhausted:
                assert {p: ledger.remaining(p) for p in pods} == before
            for p in pods:
                assert ledger.remaining(p) >= 0.0
                assert ledger.spent(p) <= 3.0 + 1e-9

    @pytest.mark.parametrize("seed", SEEDS)
    def test_concurrent_random_charges(self, seed):
        rng = SimulationRandom(seed).stream("concurrent-budget")
        pods = [f"p{i}" for i in range(5)]
        charges = [
            (rng.sample(pods, 1 + rng.randrange(len(pods))), 0.05 + 0.95 * rng.random())
            for _ in range(200)
        ]
        ledger = BudgetLedger(3.0)

        def attempt(charge):
            chosen, eps = charge
            try:
                ledger.charge(chosen, eps)
            except BudgetExhausted as e:
                return e.pod_ids
            return None

        with ThreadPoolExecutor(max_workers=8) as pool:
            outcomes = list(pool.map(attempt, charges))

        for (chosen, eps), refused in zip(charges, outcomes):
            if refused is not None:
                assert refused and set(refused) <= set(chosen)
                # Budgets only shrink, so a POD short then is still short.
                for p in refused:
                    assert ledger.remaining(p) + TOLERANCE < eps
        for p in pods:
            debited = sum(
                eps for (chosen, eps), refused in zip(charges, outcomes)
                if refused is None and p in chosen
            )
            assert ledger.spent(p) == pytest.approx(debited)
            assert ledger.spent(p) <= 3.0 + TOLERANCE
            assert ledger.remaining(p) >= 0.0

    def test_racing_charges_on_a_shared_pod(self):
        workers = 12
        ledger = BudgetLedger(1.0)
        barrier = threading.Barrier(workers)

        def attempt(i):
            barrier.wait()
            try:
                ledger.charge(["shared", f"own{i}"], 0.3)
            except BudgetExhausted as e:
                return e.pod_ids
            return None

        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(attempt, range(workers)))

        charged = [i for i, refused in enumerate(outcomes) if refused is None]
        assert len(charged) == 3
        assert all(refused == ["shared"] for refused in outcomes if refused is not None)
        assert ledger.spent("shared") == pytest.approx(0.9)
        for i in range(workers):
            assert ledger.spent(f"own{i}") == pytest.approx(0.3 if i in charged else 0.0)


def _mutate_record(rec, rng):
    """Change exactly one byte of what the data prover checks."""
    target = rng.randrange(3)
    if target == 0:
        sig = bytearray(rec.source_signature)
        sig[rng.randrange(len(sig))] ^= 1 + rng.randrange(255)
        return DataRecord(rec.pod_id, rec.payload, rec.source_kind, bytes(sig), rec.signer)
    if target == 1:
        note = rec.payload["note"]
        i = rng.randrange(len(note))
        swapped = SECRET_ALPHABET[(SECRET_ALPHABET.index(note[i]) + 1) % len(SECRET_ALPHABET)]
        payload = {**rec.payload, "note": note[:i] + swapped + note[i + 1 :]}
        return DataRecord(rec.pod_id, payload, rec.source_kind, rec.source_signature, rec.signer)
    signer = rec.signer
    i = rng.randrange(len(signer))
    flipped = "0" if signer[i] != "0" else "1"
    return DataRecord(
        rec.pod_id, rec.payload, rec.source_kind, rec.source_signature,
        signer[:i] + flipped + signer[i + 1 :],
    )


class TestSignatureFuzz:
    """A single changed byte in a signed record always gets it rejected."""

    def test_thousand_mutated_batches(self):
        rng = SimulationRandom(11).stream("sigfuzz")
        org = KeyPair.generate(rng.stream("org"))
        registry = {org.key_id: org.public}

        for trial in range(1000):
            batch = []
            for j in range(1 + rng.randrange(4)):
                note = "".join(SECRET_ALPHABET[rng.randrange(len(SECRET_ALPHABET))] for _ in range(8))
                unsigned = DataRecord(f"pod{j}", {"note": note, "n": rng.randrange(10**6)}, SourceKind.ORG_SIGNED)
                batch.append(
                    DataRecord(
                        unsigned.pod_id, unsigned.payload, SourceKind.ORG_SIGNED,
                        sign(org, unsigned.signed_bytes()), org.key_id,
                    )
                )
            victim = rng.randrange(len(batch))
            batch[victim] = _mutate_record(batch[victim], rng)

            validated, summary = prover_lambda_fn(batch, registry)

            assert summary[AuthVerdict.REJECTED.value] == 1, trial
            assert summary[AuthVerdict.VERIFIED.value] == len(batch) - 1
            assert all(rec is not batch[victim] for rec, _ in validated)


def _openers(blob, holders):
    opened = set()
    for name, keys in holders.items():
        for key in keys:
            try:
                open_with(key, blob)
            except AuthFailure:
                continue
            opened.add(name)
    return opened


class TestEdgeIsolation:
    """Each edge key opens its own edge and nothing else."""

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_edge_key_matrix(self, n):
        rng = SimulationRandom(n).stream("edges")
        keys = [EdgeKey.generate(i, rng) for i in range(n + 1)]
        blobs = [seal_with(k, f"edge {i}".encode(), rng) for i, k in enumerate(keys)]
        for i, key in enumerate(keys):
            for j, blob in enumerate(blobs):
                if i == j:
                    assert open_with(key, blob) == f"edge {j}".encode()
                else:
                    with pytest.raises(AuthFailure):
                        open_with(key, blob)

        # Step s holds K_s and K_{s+1}: only the two ends of an edge can open it.
        steps = {s: [keys[s], keys[s + 1]] for s in range(n)}
        for j, blob in enumerate(blobs):
            assert _openers(blob, steps) == {s for s in (j - 1, j) if 0 <= s < n}

    @pytest.mark.parametrize("require_dp,length", [(False, 2), (True, 3)])
    def test_installed_keys_open_only_adjacent_edges(
        self, make_network, make_executor, make_spec, ads_entries, require_dp, length
    ):
        network = make_network(ads_entries)
        executor = make_executor(network)
        plan = executor.plan_pipeline(make_spec(network, require_dp=require_dp))
        executor.recruit_instances(plan)
        chain = executor.owner_attest_and_keygen(plan, network.pods)
        assert len(plan.steps) == length

        holders = {"consumer": list(network.consumer.keys.values())}
        for pod in network.pods:
            holders[pod.node_id] = list(pod.keys.values())
        for s, step in enumerate(plan.steps):
            instance = network.node(step.node_id).instance
            holders[s] = [instance.ingress_key, instance.egress_key]

        rng = SimulationRandom(3).stream("edge-blobs")
        pods = {pod.node_id for pod in network.pods}
        for j, key in enumerate(chain.edge_keys):
            expected = {s for s in (j - 1, j) if 0 <= s < length}
            if j == 0:
                expected |= pods
            if j == length:
                expected.add("consumer")
            assert _openers(seal_with(key, b"payload", rng), holders) == expected
