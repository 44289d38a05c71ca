"""One-page PDF summaries."""
import artifacts
from report_generator import _safe_text, generate_report


def test_safe_text_maps_symbols():
    assert _safe_text("λ₂ ≤ ε²") == "lambda <= eps^2"
    assert _safe_text(None) == ""


def test_report_is_written(tmp_path):
    summary = {"meta": artifacts.make_meta("a" * 64, n=512, eps=0.05),
               "eps": 0.05, "exit_reason": "t_end",
               "verdict": {"passed": True, "max_rel_err": 1.2e-3, "window": [0.0, 20.0]},
               "eigenvalues": list(range(40)), "note": "ξ moves left, gap ≥ ρ/μ"}
    out = generate_report(summary, str(tmp_path / "run.pdf"), title="layerlab compare",
                          table=[{"index": 1, "lambda": 1e-6}, {"index": 2, "lambda": 1.5}],
                          footer="t = x / ε")
    with open(out, "rb") as f:
        assert f.read(4) == b"%PDF"
