import numpy as np
import pytest

from ddpsim.mcsim import (
    BalanceExperiment,
    Strategy,
    run_ablation,
    run_balance_experiment,
)
from ddpsim.seqdata import LengthDistribution, Sample, Topology, generate_corpus

STRATEGIES = ("none", "global_presort", "packing", "local_presort")


def uniform_corpus(n, length=512):
    return tuple(Sample(i, length) for i in range(n))


@pytest.fixture(scope="module")
def bimodal_corpus():
    return tuple(generate_corpus(LengthDistribution(), 50_000, seed=2024))


class TestDegenerateCases:
    @pytest.mark.parametrize("strategy", STRATEGIES)
    def test_all_512_corpus_gives_exact_totals(self, strategy):
        exp = BalanceExperiment(
            strategy, Topology(2, 4), uniform_corpus(512), seed=1,
            local_batch=16, trials=40,
        )
        stats = run_balance_experiment(exp)
        assert stats.avg_min == stats.avg_max == 16 * 512
        assert stats.stderr_min == stats.stderr_max == 0.0

    @pytest.mark.parametrize("strategy", STRATEGIES)
    def test_single_gpu(self, strategy, bimodal_corpus):
        exp = BalanceExperiment(
            strategy, Topology(1, 1), bimodal_corpus, seed=7, local_batch=16, trials=30,
        )
        stats = run_balance_experiment(exp)
        assert stats.avg_min == stats.avg_max

    def test_uniform_length_equal_counts_any_strategy(self):
        exp = BalanceExperiment(
            "local_presort", Topology(2, 2), uniform_corpus(600, length=100),
            seed=3, local_batch=8, trials=20, scan="snake",
        )
        stats = run_balance_experiment(exp)
        assert stats.avg_min == stats.avg_max == 8 * 100


class TestDeterminism:
    def test_bit_identical_reruns(self, bimodal_corpus):
        def run():
            exp = BalanceExperiment(
                "local_presort", Topology(4, 4), bimodal_corpus, seed=99,
                local_batch=16, trials=150, scan="snake",
            )
            return run_balance_experiment(exp)

        assert run() == run()

    def test_seed_changes_results(self, bimodal_corpus):
        def run(seed):
            exp = BalanceExperiment(
                "none", Topology(4, 4), bimodal_corpus, seed=seed,
                local_batch=16, trials=50,
            )
            return run_balance_experiment(exp)

        assert run(1) != run(2)


class TestOrdering:
    def test_local_presort_snake_beats_none(self, bimodal_corpus):
        topo = Topology(8, 8)
        none = run_balance_experiment(
            BalanceExperiment("none", topo, bimodal_corpus, seed=5, trials=400)
        )
        snake = run_balance_experiment(
            BalanceExperiment("local_presort", topo, bimodal_corpus, seed=5,
                              trials=400, scan="snake")
        )
        assert snake.avg_range < none.avg_range

    def test_stratified_tightens_bimodal_spread(self, bimodal_corpus):
        # stratified draws versus raw draws, roughly five sigma apart
        topo = Topology(4, 4)
        none = run_balance_experiment(
            BalanceExperiment("none", topo, bimodal_corpus, seed=11, trials=1000)
        )
        strat = run_balance_experiment(
            BalanceExperiment("stratified", topo, bimodal_corpus, seed=12, trials=1000)
        )
        gap_se = np.hypot(none.stderr_range, strat.stderr_range)
        assert none.avg_range - strat.avg_range > 1.645 * gap_se


class TestAblation:
    def test_row_labels_and_count(self, bimodal_corpus):
        base = BalanceExperiment(
            "local_presort", Topology(2, 4), bimodal_corpus, seed=8, trials=60,
        )
        rows = run_ablation(base)
        assert [label for label, _ in rows] == [
            "none", "+stratification", "+local_presorting", "+snake_scanning",
            "global_presort",
        ]

    def test_uniform_corpus_rows_identical(self):
        base = BalanceExperiment(
            "local_presort", Topology(2, 4), uniform_corpus(600), seed=8, trials=30,
        )
        stats = [s for _, s in run_ablation(base)]
        assert all(s.avg_min == s.avg_max == 16 * 512 for s in stats)
        assert len({(s.avg_min, s.avg_max, s.avg_range) for s in stats}) == 1

    def test_requires_local_presort_lineage(self, bimodal_corpus):
        base = BalanceExperiment(
            "none", Topology(2, 4), bimodal_corpus, seed=8, trials=10,
        )
        with pytest.raises(ValueError, match="local_presort"):
            run_ablation(base)


class TestPackingDraws:
    def test_all_singleton_packs_draw_local_batch_each(self):
        # 512-length corpus packs as singletons: every GPU still sees 16
        # sequences, hence exactly 16 * 512 tokens
        exp = BalanceExperiment(
            "packing", Topology(1, 2), uniform_corpus(256), seed=4,
            local_batch=16, trials=25,
        )
        stats = run_balance_experiment(exp)
        assert stats.avg_min == stats.avg_max == 16 * 512

    def test_all_pair_packs_draw_half_as_many(self):
        # 256-length corpus packs into pairs of 512 tokens: 8 packs per GPU
        exp = BalanceExperiment(
            "packing", Topology(1, 2), uniform_corpus(256, length=256), seed=4,
            local_batch=16, trials=25,
        )
        stats = run_balance_experiment(exp)
        assert stats.avg_min == stats.avg_max == 16 * 256

    def test_mixed_pack_sizes_conserve_member_budget(self):
        # corpus packs into two pairs (510 tokens) and four singletons (500):
        # with 2 GPUs and local batch 4 the member budget forces min+max to
        # exhaust all packs, so min + max always equals the corpus total
        lengths = [500, 500, 500, 500, 500, 500, 10, 10]
        corpus = tuple(Sample(i, v) for i, v in enumerate(lengths))
        exp = BalanceExperiment(
            "packing", Topology(1, 2), corpus, seed=13, local_batch=4, trials=200,
        )
        stats = run_balance_experiment(exp)
        assert stats.avg_min + stats.avg_max == pytest.approx(sum(lengths), abs=1e-9)
        assert stats.avg_min > 0

    def test_exhaustion_raises(self):
        exp = BalanceExperiment(
            "packing", Topology(1, 2), uniform_corpus(8), seed=1,
            local_batch=16, trials=1,
        )
        with pytest.raises(ValueError, match="exhaust"):
            run_balance_experiment(exp)


class TestValidationAndErrors:
    def test_corpus_too_small_for_uniform_draws(self):
        exp = BalanceExperiment(
            "none", Topology(2, 4), uniform_corpus(32), seed=1,
            local_batch=16, trials=1,
        )
        with pytest.raises(ValueError, match="exhaust"):
            run_balance_experiment(exp)

    def test_stratum_exhaustion_detected(self):
        # everything lives in one stratum; the trial needs more than it holds
        corpus = tuple(Sample(i, 40) for i in range(40))
        exp = BalanceExperiment(
            "local_presort", Topology(1, 4), corpus, seed=1, local_batch=16, trials=1,
        )
        with pytest.raises(ValueError, match="stratum"):
            run_balance_experiment(exp)

    def test_experiment_validation(self):
        corpus = uniform_corpus(8)
        with pytest.raises(ValueError):
            BalanceExperiment("none", Topology(1, 1), corpus, seed=1, trials=0)
        with pytest.raises(ValueError):
            BalanceExperiment("none", Topology(1, 1), corpus, seed=1, local_batch=0)
        with pytest.raises(ValueError):
            BalanceExperiment("nope", Topology(1, 1), corpus, seed=1)
        with pytest.raises(ValueError):
            BalanceExperiment("none", Topology(1, 1), (), seed=1)

    def test_strategy_enum_round_trip(self):
        assert Strategy("local_presort") is Strategy.LOCAL_PRESORT
