# report_generator.py
import logging
from typing import Any, Dict, List, Optional, Sequence

from fpdf import FPDF

log = logging.getLogger(__name__)

# ---------------- Text sanitation (FPDF is Latin-1 only by default) ----------------
_SAFE_MAP = {
    "\u2014": "-",     # em dash
    "\u2013": "-",     # en dash
    "\u2212": "-",     # minus sign
    "\u2026": "...",   # ellipsis
    "\u2264": "<=",
    "\u2265": ">=",
    "\u2016": "||",    # norm bars
    "\u00B2": "^2",
    "\u03B5": "eps",
    "\u03BE": "xi",
    "\u03BC": "mu",
    "\u03C1": "rho",
    "\u03C2": "varsigma",
    "\u03BB": "lambda",
    "\u03C6": "phi",
    "\u03B7": "eta",
    "\u00A0": " ",     # nbsp
    "\u200B": "",      # zero-width space
}


def _safe_text(x: Any) -> str:
    s = "" if x is None else str(x)
    for u, a in _SAFE_MAP.items():
        s = s.replace(u, a)
    return s.encode("latin-1", "ignore").decode("latin-1")


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        inner = ", ".join(_fmt(x) for x in v[:8])
        return f"[{inner}{', ...' if len(v) > 8 else ''}]"
    return str(v)


def _cell(pdf: FPDF, w, h, txt, **kw):
    pdf.cell(w, h, _safe_text(txt), **kw)


def _multi_cell(pdf: FPDF, w, h, txt, **kw):
    pdf.multi_cell(w, h, _safe_text(txt), **kw)


# ---------------- PDF helpers ----------------
def _add_table_header(pdf: FPDF, headers, widths, height=7):
    pdf.set_font("Arial", "B", 10)
    for h, w in zip(headers, widths):
        _cell(pdf, w, height, h, border=1, align="C")
    pdf.ln(height)
    pdf.set_font("Arial", "", 10)


def _cell_row(pdf: FPDF, row_vals, widths, height=7, align="L"):
    for v, w in zip(row_vals, widths):
        _cell(pdf, w, height, _fmt(v), border=1, align=align)
    pdf.ln(height)


def _scalars(d: Dict[str, Any], prefix: str = "") -> List[Sequence[str]]:
    """Flatten nested dicts into (key, value) rows, skipping long arrays."""
    rows = []
    for k in sorted(d):
        v = d[k]
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            rows.extend(_scalars(v, key + "."))
        elif isinstance(v, (list, tuple)) and len(v) > 32:
            rows.append((key, f"<{len(v)} values>"))
        else:
            rows.append((key, v))
    return rows


# ---------------- Public API ----------------
def generate_report(summary: Dict[str, Any], output_path: str, title: str = "layerlab run summary",
                    table: Optional[List[Dict[str, Any]]] = None, footer: Optional[str] = None) -> str:
    """
    One-page PDF of a run: meta block, flattened scalar results and an optional
    small table (list of row dicts sharing keys).
    """
    pdf = FPDF()
    pdf.set_auto_page_break(auto=True, margin=12)
    pdf.add_page()

    pdf.set_font("Arial", "B", 16)
    _cell(pdf, 0, 10, title, ln=True, align="C")
    meta = summary.get("meta", {})
    if meta:
        pdf.set_font("Arial", "", 9)
        _cell(pdf, 0, 5, f"{meta.get('artifact', '')}   config sha256 {meta.get('config_sha256', '')[:16]}",
              ln=True, align="C")
    pdf.ln(3)

    pdf.set_font("Arial", "B", 13)
    _cell(pdf, 0, 8, "Results", ln=True)
    page_w = pdf.w - 2 * pdf.l_margin
    widths = [page_w * 0.4, page_w * 0.6]
    _add_table_header(pdf, ["Quantity", "Value"], widths)
    for key, value in _scalars({k: v for k, v in summary.items() if k != "meta"}):
        _cell_row(pdf, [key, value], widths)

    if table:
        headers = list(table[0].keys())
        pdf.ln(4)
        pdf.set_font("Arial", "B", 13)
        _cell(pdf, 0, 8, "Table", ln=True)
        w = page_w / max(len(headers), 1)
        _add_table_header(pdf, headers, [w] * len(headers))
        for row in table:
            _cell_row(pdf, [row.get(h, "") for h in headers], [w] * len(headers))

    if footer:
        pdf.ln(2)
        pdf.set_font("Arial", "I", 9)
        _multi_cell(pdf, 0, 5, footer)

    pdf.output(output_path)
    log.info("✅ Report saved to %s", output_path)
    return output_path
