"""Dataset synthesis, metric computation, and the CLI surface."""

from __future__ import annotations

import json

import pytest

from sonopilot.backends import RulePolicyBackend, ScriptedBackend
from sonopilot.cli import main as cli_main
from sonopilot.corpus import build_default_index, default_registry
from sonopilot.embedding import HashEmbedder
from sonopilot.errors import InsufficientTemplates
from sonopilot.evaluation import (
    eval_execution,
    eval_retrieval,
    first_step_success,
    load_eval_pairs,
    percent,
)
from sonopilot.knowledge import build_index, recall_at_k, usage_key
from sonopilot.robot import FaultSpec
from sonopilot.synth import SynthDatasetSpec, synth_dataset, write_dataset

INDEX = build_default_index()
REGISTRY = default_registry()
POLICY = RulePolicyBackend()


# --- synthesis ---


def test_synth_counts_exact_at_paper_scale():
    dataset = synth_dataset(SynthDatasetSpec(seed=7))
    assert len(dataset.usage_records) == 622
    assert len(dataset.handbook_entries) == 522
    assert len(dataset.eval_pairs) == 622 + 522


def test_synth_deterministic_files(tmp_path):
    spec = SynthDatasetSpec(seed=7, n_api=40, n_handbook=30)
    write_dataset(synth_dataset(spec), tmp_path / "a")
    write_dataset(synth_dataset(spec), tmp_path / "b")
    for name in ("api_usage.jsonl", "handbook.jsonl", "eval_pairs.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_seed_changes_output():
    a = synth_dataset(SynthDatasetSpec(seed=1, n_api=40, n_handbook=30))
    b = synth_dataset(SynthDatasetSpec(seed=2, n_api=40, n_handbook=30))
    assert a.usage_records != b.usage_records


def test_synth_single_record():
    dataset = synth_dataset(SynthDatasetSpec(seed=0, n_api=1, n_handbook=1))
    assert len(dataset.usage_records) == 1
    assert dataset.usage_records[0].api_name in {s.name for s in REGISTRY}


def test_synth_rejects_oversized_request():
    with pytest.raises(InsufficientTemplates):
        synth_dataset(SynthDatasetSpec(seed=0, n_api=100_000))
    with pytest.raises(InsufficientTemplates):
        synth_dataset(SynthDatasetSpec(seed=0, n_handbook=100_000))


def test_synth_queries_are_held_out():
    dataset = synth_dataset(SynthDatasetSpec(seed=3, n_api=120, n_handbook=90))
    index_texts = {r.usage_narrative for r in dataset.usage_records}
    index_texts |= {e.paired_instruction for e in dataset.handbook_entries}
    for query, _, _ in dataset.eval_pairs:
        assert query not in index_texts


def test_synth_gold_keys_resolve_in_built_index():
    dataset = synth_dataset(SynthDatasetSpec(seed=3, n_api=60, n_handbook=40))
    index = build_index(
        HashEmbedder(128), dataset.usage_records, dataset.handbook_entries
    )
    keys = {e.key for e in index.entries}
    for _, gold, _ in dataset.eval_pairs:
        assert gold in keys


def test_synth_narratives_unique():
    dataset = synth_dataset(SynthDatasetSpec(seed=5, n_api=622, n_handbook=522))
    narratives = [r.usage_narrative for r in dataset.usage_records]
    assert len(set(narratives)) == len(narratives)
    instructions = [e.paired_instruction for e in dataset.handbook_entries]
    assert len(set(instructions)) == len(instructions)


# --- metrics ---


def test_percent_rounds_half_up():
    assert percent(1, 8) == 13  # 12.5 -> 13
    assert percent(17, 20) == 85
    assert percent(0, 3) == 0
    assert percent(2, 3) == 67
    assert percent(20, 20) == 100
    assert percent(1, 200) == 1  # 0.5 -> 1


def test_eval_retrieval_identity_pairs_all_ones():
    dataset = synth_dataset(SynthDatasetSpec(seed=2, n_api=30, n_handbook=20))
    index = build_index(HashEmbedder(256), dataset.usage_records, dataset.handbook_entries)
    pairs = []
    for i, record in enumerate(dataset.usage_records):
        ordinal = sum(
            1 for r in dataset.usage_records[:i] if r.api_name == record.api_name
        )
        pairs.append((record.usage_narrative, usage_key(record.api_name, ordinal), "api-usage"))
    rows = eval_retrieval(index, pairs, ks=(1, 3, 10))
    assert all(r.recall == 1.0 for r in rows if r.k >= 3)
    # identical text scores 1.0; k=1 can only lose to an exact duplicate
    assert all(r.recall > 0.9 for r in rows)


def test_eval_retrieval_matches_recall_op():
    dataset = synth_dataset(SynthDatasetSpec(seed=4, n_api=50, n_handbook=30))
    index = build_index(HashEmbedder(256), dataset.usage_records, dataset.handbook_entries)
    rows = eval_retrieval(index, list(dataset.eval_pairs), ks=(1, 3))
    for row in rows:
        subset = [(q, g) for q, g, k in dataset.eval_pairs if k == row.module]
        assert row.recall == recall_at_k(index, subset, row.k, kind_filter=row.module)
        assert row.pairs == len(subset)


def test_exec_metrics_golden_and_ablations():
    full = eval_execution(lambda i: POLICY, INDEX, ablation="uar+rhr", replications=20)
    assert full.first_step_percent == 100
    assert full.overall_percent == 100
    assert all(r.steps == 7 for r in full.records)

    uar = eval_execution(lambda i: POLICY, INDEX, ablation="uar", replications=20)
    assert uar.overall_percent == 0

    none = eval_execution(lambda i: POLICY, INDEX, ablation="none", replications=20)
    assert none.first_step_percent == 0
    assert none.overall_percent == 0

    # monotone direction across the ablation ladder
    assert full.overall_rate >= uar.overall_rate >= none.overall_rate


def test_ablation_monotone_on_second_seed_set():
    runs = {
        ablation: eval_execution(
            lambda i: POLICY, INDEX, ablation=ablation, replications=5, base_seed=100
        )
        for ablation in ("uar+rhr", "uar", "none")
    }
    assert (
        runs["uar+rhr"].overall_rate
        >= runs["uar"].overall_rate
        >= runs["none"].overall_rate
    )
    assert runs["uar+rhr"].overall_percent == 100


def test_exec_metrics_fault_recovery():
    fault = FaultSpec(kind="patient_motion", after_invocations=4)
    metrics = eval_execution(
        lambda i: POLICY, INDEX, ablation="uar+rhr", replications=20, fault=fault
    )
    assert metrics.overall_percent == 100
    assert all(r.steps == 9 for r in metrics.records)


def test_exec_scripted_backend_gets_fresh_cursor():
    turns = ['<|sot|>{"api_name":"Init_Depth_Camera","parameters":{}}<|eot|>']
    metrics = eval_execution(
        lambda i: ScriptedBackend(turns), INDEX, ablation="uar+rhr", replications=3,
    )
    assert metrics.first_step_percent == 100
    assert metrics.overall_percent == 0  # script too short to finish


def test_first_step_requires_valid_and_ok():
    bad_then_good = [
        '<|sot|>{"api_name":"Start_Probe_Heating","parameters":{}}<|eot|>',
        '<|sot|>{"api_name":"Init_Depth_Camera","parameters":{}}<|eot|>',
    ]
    metrics = eval_execution(
        lambda i: ScriptedBackend(bad_then_good), INDEX, ablation="uar+rhr", replications=2,
    )
    assert metrics.first_step_successes == 0


# --- CLI ---


def test_cli_synth_and_eval_retrieval(tmp_path, capsys):
    out = tmp_path / "data"
    assert cli_main([
        "synth", "--seed", "5", "--n-api", "40", "--n-handbook", "30", "--out", str(out)
    ]) == 0
    assert (out / "api_usage.jsonl").exists()
    assert len((out / "api_usage.jsonl").read_text().splitlines()) == 40
    assert cli_main([
        "eval-retrieval", "--index", str(out), "--pairs", str(out / "eval_pairs.jsonl"),
        "--k", "1,3,10", "--jsonl", str(tmp_path / "rows.jsonl"),
    ]) == 0
    captured = capsys.readouterr()
    assert "api-usage" in captured.out and "handbook" in captured.out
    rows = [json.loads(l) for l in (tmp_path / "rows.jsonl").read_text().splitlines()]
    assert {r["module"] for r in rows} == {"api-usage", "handbook"}
    assert all(0.0 <= r["recall"] <= 1.0 for r in rows)


def test_cli_eval_exec(tmp_path, capsys):
    assert cli_main([
        "eval-exec", "--backend", "rule", "--ablation", "uar+rhr", "--reps", "5",
        "--jsonl", str(tmp_path / "reps.jsonl"),
    ]) == 0
    out = capsys.readouterr().out
    assert "100" in out
    rows = [json.loads(l) for l in (tmp_path / "reps.jsonl").read_text().splitlines()]
    assert len(rows) == 5
    assert all(r["terminal"] == "Completed" for r in rows)


def test_cli_run_json(capsys):
    rc = cli_main([
        "run", "--instruction", "Perform a carotid artery ultrasound scan", "--json",
    ])
    assert rc == 0
    data = json.loads(capsys.readouterr().out)
    assert data["terminal"] == "Completed"
    assert len(data["steps"]) == 7


def test_cli_run_with_fault(capsys):
    rc = cli_main([
        "run", "--instruction", "Perform a carotid artery ultrasound scan",
        "--fault", "patient_motion:after:4", "--json",
    ])
    assert rc == 0
    data = json.loads(capsys.readouterr().out)
    assert data["terminal"] == "Completed"
    assert len(data["steps"]) == 9


def test_cli_bad_fault_syntax(capsys):
    rc = cli_main([
        "run", "--instruction", "scan", "--fault", "bogus",
    ])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_cli_eval_pairs_loader(tmp_path):
    out = tmp_path / "d"
    write_dataset(synth_dataset(SynthDatasetSpec(seed=1, n_api=5, n_handbook=4)), out)
    pairs = load_eval_pairs(out / "eval_pairs.jsonl")
    assert len(pairs) == 9
    assert all(len(p) == 3 for p in pairs)
