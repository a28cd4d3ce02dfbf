"""Acceptance criteria, one group per criterion.

A summary line per criterion is printed at the end of the pytest run
(see ``pytest_terminal_summary`` in conftest).
"""
import os
import time
from pathlib import Path

import numpy as np
import pytest

from dualview_tkg.config import RunConfig
from dualview_tkg.data import SnapshotSequence, add_inverse, load_dataset, queries_at
from dualview_tkg.evaluation import aggregate, filtered_rank
from dualview_tkg.graphs import DYNAMICS, ContextBuilder, HistoryIndex, ViewSubgraph, build_dynamics, build_invariance
from dualview_tkg.model import Decomposer, DualViewModel, ModelConfig, ViewEncoder, contrastive_loss
from dualview_tkg.rules import mine_rules
from dualview_tkg.synth import SyntheticSpec, generate_dataset
from dualview_tkg.tensor import (
    Parameter, Tensor, check_gradients, clip, concat, conv1d, cos, cross_entropy, dropout, exp, gelu,
    geglu, l2_normalize, layer_norm, linear, log, log_softmax, matmul, mean, relu, reshape, rrelu,
    save_checkpoint, load_checkpoint, segment_softmax, segment_sum, sigmoid, slice_cols, softmax,
    sqrt, stack, sum_, take, tanh, transpose,
)
from dualview_tkg.tensor.optim import AdamState
from dualview_tkg.training import Experiment

from conftest import random_facts, split_dataset
from test_evaluation import sort_oracle
from test_graphs import reference_dynamics, reference_invariance
from test_rules import as_table, brute_force_rules

FD_STEP = 1e-4
FD_TOL = 1e-4


def timed(limit_seconds):
    """Fail the wrapped check when it overruns its runtime budget."""
    def wrap(fn):
        def run(*args, **kwargs):
            start = time.perf_counter()
            fn(*args, **kwargs)
            elapsed = time.perf_counter() - start
            assert elapsed < limit_seconds, f"took {elapsed:.1f}s, budget {limit_seconds}s"
        run.__name__, run.__doc__ = fn.__name__, fn.__doc__
        return run
    return wrap


# ---------------------------------------------------------------------------
# 1. gradient soundness

def _op_cases(rng):
    """(name, loss builder, parameters) for every differentiable operation."""
    def p(*shape, lo=-1.0, hi=1.0):
        return Parameter(rng.uniform(lo, hi, size=shape))

    a, b, row = p(3, 4), p(3, 4), p(4)
    m1, m2 = p(3, 4), p(4, 2)
    pos = p(3, 4, lo=0.5, hi=2.0)
    away = Parameter(np.sign(rng.normal(size=(3, 4))) * rng.uniform(0.2, 1.0, size=(3, 4)))
    x, gain, bias = p(3, 5), p(5), p(5)
    lin_bias = p(2)
    xg, wa, wb = p(2, 3), p(3, 4), p(3, 4)
    cx, ck, cb = p(2, 2, 5), p(3, 2, 3), p(3)
    logits, seg_logits = p(4, 6), p(7)
    seg = np.array([0, 0, 1, 2, 2, 2, 1])
    weights = Tensor(rng.normal(size=(3, 4)))
    idx = np.array([2, 0, 2, 1])

    def w(t):
        """Weighted sum so every output element carries a distinct gradient."""
        return sum_(t * Tensor(np.linspace(0.5, 1.5, t.size).reshape(t.shape)))

    return [
        ("add", lambda: w(a + b), [a, b]),
        ("sub", lambda: w(a - b), [a, b]),
        ("mul", lambda: w(a * b), [a, b]),
        ("div", lambda: w(a / pos), [a, pos]),
        ("broadcast mul", lambda: w(a * row), [a, row]),
        ("exp", lambda: w(exp(a)), [a]),
        ("log", lambda: w(log(pos)), [pos]),
        ("sqrt", lambda: w(sqrt(pos)), [pos]),
        ("cos", lambda: w(cos(a)), [a]),
        ("clip", lambda: w(clip(a, -5.0, 5.0)), [a]),
        ("matmul", lambda: w(matmul(m1, m2)), [m1, m2]),
        ("transpose", lambda: w(transpose(a)), [a]),
        ("reshape", lambda: w(reshape(a, (4, 3))), [a]),
        ("sum", lambda: w(sum_(a, axis=0)), [a]),
        ("mean", lambda: w(mean(a, axis=1)), [a]),
        ("concat", lambda: w(concat([a, b], axis=1)), [a, b]),
        ("stack", lambda: w(stack([a, b])), [a, b]),
        ("slice_cols", lambda: w(slice_cols(a, 1, 3)), [a]),
        ("take", lambda: w(take(a, idx)), [a]),
        ("segment_sum", lambda: w(segment_sum(a, np.array([1, 0, 1]), 2)), [a]),
        ("relu", lambda: w(relu(away)), [away]),
        ("rrelu", lambda: w(rrelu(away)), [away]),
        ("tanh", lambda: w(tanh(a)), [a]),
        ("sigmoid", lambda: w(sigmoid(a)), [a]),
        ("gelu", lambda: w(gelu(a)), [a]),
        ("softmax", lambda: w(softmax(a, axis=1)), [a]),
        ("log_softmax", lambda: w(log_softmax(a, axis=0)), [a]),
        ("cross_entropy", lambda: cross_entropy(logits, np.array([0, 5, 2, 2])), [logits]),
        ("layer_norm", lambda: w(layer_norm(x, gain, bias)), [x, gain, bias]),
        ("geglu", lambda: w(geglu(xg, wa, wb)), [xg, wa, wb]),
        ("conv1d", lambda: w(conv1d(cx, ck, cb)), [cx, ck, cb]),
        ("dropout", lambda: w(dropout(a, 0.5, True, np.random.default_rng(4))), [a]),
        ("segment_softmax", lambda: w(segment_softmax(seg_logits, seg, 3)), [seg_logits]),
        ("l2_normalize", lambda: w(l2_normalize(a)), [a]),
        ("linear", lambda: w(linear(m1, transpose(m2), lin_bias)), [m1, m2, lin_bias]),
        ("composite", lambda: w(tanh(matmul(a * weights, transpose(b))) + sigmoid(a).sum()), [a, b]),
    ]


@pytest.mark.criterion(1, "gradient soundness")
class TestCriterion1:
    @timed(60)
    def test_every_operation(self):
        rng = np.random.default_rng(11)
        failures = {}
        for name, fn, params in _op_cases(rng):
            worst = max(check_gradients(fn, params, FD_STEP))
            if not worst < FD_TOL:
                failures[name] = worst
        assert not failures, failures

    @timed(60)
    def test_end_to_end_loss_on_toy(self):
        facts = random_facts(np.random.default_rng(3), 5, 3, 6, 4)
        ds = split_dataset(facts, 5, 3, 4, 5)
        rules = mine_rules(ds.train.facts(), 3, min_body_support=1)
        builder = ContextBuilder(ds.all_facts(), 3, rules, cap=4)
        model = DualViewModel(ModelConfig(num_entities=5, num_relations=3, dim=4, conv_channels=3, dropout=0.0),
                              np.random.default_rng(3))
        ctx = builder.context(5, ds.test)
        errs = check_gradients(lambda: model.loss(ctx).total, model.parameters(), FD_STEP)
        assert max(errs) < FD_TOL


# ---------------------------------------------------------------------------
# 2. rule-mining oracle

@pytest.mark.criterion(2, "rule-mining oracle")
class TestCriterion2:
    @timed(120)
    def test_exhaustive_mining_matches_grounding_counts(self):
        mismatches = []
        for seed in range(1000):
            rng = np.random.default_rng(seed)
            num_entities, num_relations = int(rng.integers(2, 9)), int(rng.integers(1, 5))
            num_timestamps = int(rng.integers(2, 9))
            per_step = int(rng.integers(1, 200 // num_timestamps + 1))
            facts = random_facts(rng, num_entities, num_relations, num_timestamps, per_step)
            assert len(facts) <= 200
            support = int(rng.integers(1, 3))
            mined = as_table(mine_rules(facts, num_relations, mode="exhaustive", min_body_support=support))
            if mined != brute_force_rules(facts, num_relations, support):
                mismatches.append(seed)
        assert not mismatches, f"seeds disagreeing with the oracle: {mismatches[:10]}"


# ---------------------------------------------------------------------------
# 3. graph-construction oracle

@pytest.mark.criterion(3, "graph-construction oracle")
class TestCriterion3:
    @timed(60)
    def test_builders_match_references(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            num_relations = int(rng.integers(1, 4))
            facts = random_facts(rng, int(rng.integers(2, 8)), num_relations, int(rng.integers(2, 9)),
                                 int(rng.integers(1, 10)))
            aug = np.unique(add_inverse(facts, num_relations), axis=0)
            t_q = int(facts[:, 3].max())
            queries = queries_at(t_q, SnapshotSequence.from_facts(facts), num_relations)
            keys = {(s, r) for s, r, _ in queries.entity.tolist()}
            history = HistoryIndex(aug)
            rules = mine_rules(facts[facts[:, 3] < t_q], num_relations, mode="exhaustive", min_body_support=1)
            cap = int(rng.integers(1, 9))

            inv = build_invariance(queries, history)
            assert inv.edges() == reference_invariance(keys, aug.tolist(), t_q), seed
            dyn = build_dynamics(queries, history, rules, cap)
            assert dyn.edges() == reference_dynamics(keys, aug.tolist(), rules, cap, t_q), seed
            assert all(len(attributed) <= cap for attributed in dyn.attribution.values()), seed
            assert dyn.num_edges == 0 or int(dyn.delta_t.min()) >= 1, seed


# ---------------------------------------------------------------------------
# 4. metric oracle

@pytest.mark.criterion(4, "metric oracle")
class TestCriterion4:
    @timed(30)
    def test_filtered_rank_matches_sort_oracle(self):
        for seed in range(1000):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(1, 101))
            logits = np.round(rng.normal(size=n), 1)
            gold = int(rng.integers(n))
            known = rng.choice(n, size=int(rng.integers(0, n + 1)), replace=False).tolist()
            assert filtered_rank(logits, gold, known) == sort_oracle(logits, gold, known), seed

    def test_hand_values(self):
        assert aggregate([1, 2]).mrr == 75.0
        assert aggregate([1, 1, 1]).h1 == 100.0


# ---------------------------------------------------------------------------
# 5 and 6. learning benchmark and ablation directions

BENCHMARK_CONFIG = RunConfig(dim=32, lr=0.005, dropout=0.0, cap=4, max_epochs=30, patience=30, seed=0)
BENCHMARK_VARIANTS = ("full", "simple-dyn+no-inv", "no-dyn", "no-inv", "no-coa-red")

# Test MRR of each variant from the first verified run of this configuration
# (single CPU core, numpy float64). Reruns must land within PIN_TOLERANCE.
PINNED_TEST_MRR = {
    "full": 77.95,
    "simple-dyn+no-inv": 67.74,
    "no-dyn": 68.03,
    "no-inv": 67.91,
    "no-coa-red": 72.87,
}
PIN_TOLERANCE = 0.5


@pytest.fixture(scope="module")
def benchmark():
    """Train every benchmark variant once on the default synthetic dataset."""
    dataset = generate_dataset(SyntheticSpec())
    base = Experiment(dataset, BENCHMARK_CONFIG)
    results = {}
    for tag in BENCHMARK_VARIANTS:
        experiment = base.with_config(BENCHMARK_CONFIG.updated(variant=tag))
        start = time.perf_counter()
        fit = experiment.fit()
        results[tag] = dict(test=experiment.evaluate(fit.model, "test").mrr, seconds=time.perf_counter() - start,
                            epochs=len(fit.history))
    print("\nbenchmark:", {tag: round(r["test"], 2) for tag, r in results.items()})
    return results


@pytest.mark.slow
@pytest.mark.criterion(5, "learning benchmark")
class TestCriterion5:
    def test_synthetic_spec_matches_the_benchmark_definition(self):
        spec = SyntheticSpec()
        assert (spec.num_entities, spec.num_relations, spec.num_timestamps, spec.noise, spec.seed) == (
            20, 5, 60, 0.1, 7)

    def test_full_model_reaches_80_within_30_epochs(self, benchmark):
        assert benchmark["full"]["epochs"] <= 30
        assert benchmark["full"]["test"] >= 80.0

    def test_degenerate_variant_trails_by_10(self, benchmark):
        assert benchmark["simple-dyn+no-inv"]["test"] <= benchmark["full"]["test"] - 10.0

    def test_runtime_budget(self, benchmark):
        assert benchmark["full"]["seconds"] + benchmark["simple-dyn+no-inv"]["seconds"] < 600

    def test_reproduces_pinned_run(self, benchmark):
        for tag, expected in PINNED_TEST_MRR.items():
            assert benchmark[tag]["test"] == pytest.approx(expected, abs=PIN_TOLERANCE), tag


@pytest.mark.slow
@pytest.mark.criterion(6, "ablation directions")
class TestCriterion6:
    @pytest.mark.parametrize("tag", ["no-dyn", "no-inv"])
    def test_full_strictly_beats_single_view(self, benchmark, tag):
        assert benchmark["full"]["test"] > benchmark[tag]["test"]

    def test_full_within_slack_of_no_coa_red(self, benchmark):
        assert benchmark["full"]["test"] >= benchmark["no-coa-red"]["test"] - 0.5


# ---------------------------------------------------------------------------
# 7. invariant suite

def _random_dynamics_graph(rng, num_nodes=8, num_relations=3, edges=20):
    return ViewSubgraph.from_edges(9, DYNAMICS, {
        (int(rng.integers(num_nodes)), int(rng.integers(num_relations)), int(rng.integers(num_nodes)),
         int(rng.integers(1, 9))) for _ in range(edges)})


@pytest.mark.criterion(7, "invariant suite")
class TestCriterion7:
    def test_attention_rows_sum_to_one(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            g = _random_dynamics_graph(rng)
            enc = ViewEncoder(6, 2, rng, time_mode="tgat")
            _, att = enc(Tensor(rng.normal(scale=3.0, size=(8, 6))), Tensor(rng.normal(size=(3, 6))), g,
                         keep_attention=True)
            for weights in att:
                sums = np.bincount(g.dst, weights=weights.data, minlength=8)[np.unique(g.dst)]
                assert np.all(np.abs(sums - 1.0) <= 1e-9)

    def test_softmax_normalization(self):
        x = np.random.default_rng(0).normal(scale=50.0, size=(6, 9))
        assert np.allclose(softmax(Tensor(x), axis=1).data.sum(axis=1), 1.0, rtol=0, atol=1e-12)

    def test_decomposition_identity_at_zero_gate(self):
        rng = np.random.default_rng(1)
        dec = Decomposer(6, rng)
        dec.gate.out.weight.data[:] = 0.0
        x = Tensor(rng.normal(size=(4, 6)))
        assert np.array_equal(dec(x).data, x.data)

    def test_single_pair_contrastive_loss_is_zero(self):
        rng = np.random.default_rng(2)
        assert contrastive_loss(Tensor(rng.normal(size=(1, 6))), Tensor(rng.normal(size=(1, 6))), 0.3).item() == 0.0

    def test_infonce_symmetry(self):
        rng = np.random.default_rng(3)
        a, b = Tensor(rng.normal(size=(5, 6))), Tensor(rng.normal(size=(5, 6)))
        assert contrastive_loss(a, b, 0.3).item() == pytest.approx(contrastive_loss(b, a, 0.3).item(), rel=1e-12)

    def test_dropout_eval_identity(self):
        x = Tensor(np.random.default_rng(4).normal(size=(3, 5)))
        assert dropout(x, 0.5, training=False) is x

    def test_encoder_edge_order_invariance(self):
        rng = np.random.default_rng(5)
        g = _random_dynamics_graph(rng)
        p = rng.permutation(g.num_edges)
        shuffled = ViewSubgraph(g.timestamp, DYNAMICS, g.src[p], g.rel[p], g.dst[p], g.delta_t[p])
        enc = ViewEncoder(6, 2, rng, time_mode="tgat")
        ent, rel = Tensor(rng.normal(size=(8, 6))), Tensor(rng.normal(size=(3, 6)))
        assert np.allclose(enc(ent, rel, g).data, enc(ent, rel, shuffled).data, rtol=0, atol=1e-12)

    def test_checkpoint_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(6)
        params = {"a": rng.normal(size=(4, 3)), "b": rng.normal(size=7) * 1e-300}
        state = AdamState(3, {"a": rng.normal(size=(4, 3))}, {"a": rng.random((4, 3))})
        save_checkpoint(tmp_path / "c.npz", params, state, {"note": "x"})
        got, got_state, _ = load_checkpoint(tmp_path / "c.npz")
        assert all(got[k].tobytes() == v.tobytes() for k, v in params.items())
        assert got_state.exp_avg["a"].tobytes() == state.exp_avg["a"].tobytes()

    def test_one_training_epoch_is_deterministic(self):
        ds = generate_dataset(SyntheticSpec(num_entities=8, num_timestamps=20))
        exp = Experiment(ds, RunConfig(dim=4, conv_channels=2, gcn_layers=1, layers_inv=1, layers_dyn=1,
                                       cap=3, dropout=0.2, seed=5))
        runs = [exp.fit(max_epochs=1) for _ in range(2)]
        assert runs[0].history[0].loss == runs[1].history[0].loss
        first, second = runs[0].model.state_dict(), runs[1].model.state_dict()
        assert all(first[k].tobytes() == second[k].tobytes() for k in first)


# ---------------------------------------------------------------------------
# 8. real-data smoke

ICEWS14S_ENV = "TKG_ICEWS14S_DIR"


def _icews14s_dir():
    candidates = [os.environ.get(ICEWS14S_ENV, ""), str(Path(__file__).resolve().parents[1] / "data" / "ICEWS14s")]
    for candidate in candidates:
        if candidate and (Path(candidate) / "train.txt").exists():
            return Path(candidate)
    return None


@pytest.mark.criterion(8, "real-data smoke")
class TestCriterion8:
    def test_icews14s_counts_and_one_epoch(self):
        path = _icews14s_dir()
        if path is None:
            pytest.skip(f"ICEWS14s not available (set {ICEWS14S_ENV} to its directory)")
        ds = load_dataset(path, granularity=24)
        assert (ds.vocab.entity_count, ds.vocab.base_relation_count, ds.train.num_facts) == (6869, 230, 74845)
        exp = Experiment(ds, RunConfig.from_preset("icews14s").updated(dim=32, conv_channels=8))
        result = exp.fit(max_epochs=1)
        assert np.isfinite(result.history[0].loss["total"])
