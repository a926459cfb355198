import copy
import json

import pytest

from lctrace.checker import TraceFormatError, check_file, check_trace, read_trace, write_trace
from lctrace.lc_trace import CONTRACT, SolverConfig, run_first_order
from lctrace.suite import default_suite, random_quartic_instance


@pytest.fixture(scope="module")
def contracting_run():
    for inst in default_suite():
        res = run_first_order(inst, SolverConfig())
        if any(r["step_class"] == CONTRACT for r in res.trace):
            return res
    pytest.fail("no contraction in the default suite")


def failed_names(res, records=None):
    rep = check_trace(res.header, records if records is not None else res.trace, res.summary)
    return {r.name for r in rep.failed()}


class TestRoundTrip:
    def test_fresh_trace_passes(self, contracting_run, tmp_path):
        p = tmp_path / "t.jsonl"
        write_trace(p, contracting_run.header, contracting_run.trace, contracting_run.summary)
        rep = check_file(p)
        assert rep.passed, rep.lines()

    def test_read_back_identical(self, contracting_run, tmp_path):
        p = tmp_path / "t.jsonl"
        write_trace(p, contracting_run.header, contracting_run.trace, contracting_run.summary)
        header, records, summary = read_trace(p)
        assert records == json.loads(json.dumps(contracting_run.trace))
        assert summary["reason"] == contracting_run.reason

    def test_report_lines_name_every_invariant(self, contracting_run):
        rep = check_trace(contracting_run.header, contracting_run.trace, contracting_run.summary)
        text = "\n".join(rep.lines())
        for name in ("contract_shrinks_radius", "multiplier_bound", "sigma_bound", "sufficient_decrease"):
            assert name in text

    @pytest.mark.parametrize("seed", range(10))
    def test_random_runs_pass(self, seed):
        res = run_first_order(random_quartic_instance(900 + seed, 2 + seed % 2), SolverConfig(epsilon=1e-6))
        assert check_trace(res.header, res.trace, res.summary).passed


class TestSensitivity:
    def test_delta_increase_in_contraction(self, contracting_run):
        records = copy.deepcopy(contracting_run.trace)
        r = next(r for r in records if r["step_class"] == CONTRACT)
        r["delta_next"] = r["delta"] * 1.5
        assert "contract_shrinks_radius" in failed_names(contracting_run, records)

    def test_multiplier_above_bound(self, contracting_run):
        records = copy.deepcopy(contracting_run.trace)
        led = contracting_run.header["ledger"]
        records[0]["lambda"] = 2.0 * max(led["lambda0"], led["lambda_max"]) + 1.0
        assert "multiplier_bound" in failed_names(contracting_run, records)

    def test_objective_increase(self, contracting_run):
        records = copy.deepcopy(contracting_run.trace)
        records[-1]["f"] = records[0]["f"] + 1.0
        assert "monotone_objective" in failed_names(contracting_run, records)

    def test_infeasible_iterate(self, contracting_run):
        records = copy.deepcopy(contracting_run.trace)
        records[0]["x"] = [1e6] * len(records[0]["x"])
        assert "feasibility" in failed_names(contracting_run, records)

    def test_misclassified_step(self, contracting_run):
        records = copy.deepcopy(contracting_run.trace)
        r = next(r for r in records if r["step_class"] == CONTRACT)
        r["step_class"] = "AcceptSigma"
        assert "step_classification" in failed_names(contracting_run, records)


class TestFormat:
    def write(self, tmp_path, docs):
        p = tmp_path / "t.jsonl"
        p.write_text("".join(json.dumps(d) + "\n" for d in docs))
        return p

    def test_unknown_schema_refused(self, contracting_run, tmp_path):
        header = dict(contracting_run.header, schema="lctrace-trace/99")
        p = self.write(tmp_path, [header, contracting_run.summary])
        with pytest.raises(TraceFormatError, match="schema"):
            read_trace(p)

    def test_missing_summary(self, contracting_run, tmp_path):
        p = self.write(tmp_path, [contracting_run.header])
        with pytest.raises(TraceFormatError, match="summary"):
            read_trace(p)

    def test_empty(self, tmp_path):
        p = tmp_path / "e.jsonl"
        p.write_text("")
        with pytest.raises(TraceFormatError):
            read_trace(p)

    def test_garbage_line(self, tmp_path):
        p = tmp_path / "g.jsonl"
        p.write_text('{"type": "header"}\nnot json\n')
        with pytest.raises(TraceFormatError, match="line"):
            read_trace(p)
