from __future__ import annotations

from typing import TYPE_CHECKING

import inflect
from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.units import cm
from reportlab.platypus import Paragraph, TableStyle
from reportlab.platypus.flowables import KeepTogether, Spacer
from reportlab.platypus.tables import Table

from .report import Report

if TYPE_CHECKING:
    from ..bench import BenchReport

p = inflect.engine()

SUMMARY_HEADER = ["Variant", "Queries", "Mean dots", "Speedup", "Mean time (ms)", "P", "R"]


class BenchPdfReport(Report):
    """Renders a BenchReport: per-variant summary, prune histograms, and the
    theory and streaming blocks when present.
    """

    def __init__(self, bench_report: BenchReport, title: str | None = None, **kwargs):
        super().__init__(**kwargs)
        self.bench_report = bench_report
        self.title = title or "RANGE SEARCH BENCHMARK"
        self.bg_cmd = ("BACKGROUND", (0, 0), (-1, 0), colors.lightgrey)

    def __repr__(self):
        return f"{self.__class__.__name__}(bench_report={self.bench_report!r})"

    def get_report_story(self, **kwargs) -> list:
        story = []
        self.draw_overview(story)
        self.draw_summary(story)
        for variant, histograms in self.bench_report.histograms.items():
            self.draw_histogram(story, variant, histograms)
        if self.bench_report.theory:
            self.draw_key_values(story, "Theory comparison", self.bench_report.theory)
        if self.bench_report.streaming:
            self.draw_key_values(story, "Streaming", self.bench_report.streaming)
        self.draw_end_of_report(story)
        return story

    def on_first_page(self, canvas, doc):
        super().on_first_page(canvas, doc)
        width, height = A4
        canvas.setFontSize(10)
        canvas.drawString(48, height - 40, self.header_line)
        canvas.drawRightString(width - 35, height - 40, self.title)

    def on_later_pages(self, canvas, doc):
        super().on_later_pages(canvas, doc)
        width, height = A4
        canvas.setFontSize(8)
        canvas.drawRightString(width - 35, height - 35, self.title)

    @property
    def overview_text(self) -> str:
        report = self.bench_report
        queries = max((s.queries for s in report.aggregates.values()), default=0)
        variants = p.join(list(report.aggregates)) or "no variants"
        verdict = (
            "All results matched the exhaustive scan."
            if report.exact
            else f"{p.no('mismatch', len(report.mismatches))} against the exhaustive scan."
        )
        return (
            f"{p.no('query', queries).capitalize()} over {p.no('vector', report.N)} "
            f"of dimension {report.d} at threshold {report.rho:g}, "
            f"{p.plural('variant', len(report.aggregates))}: {variants}. {verdict}"
        )

    def draw_overview(self, story):
        self.draw_narrative(story, title="Overview", text=self.overview_text)
        story.append(Spacer(0.1 * cm, 0.5 * cm))

    def draw_summary(self, story):
        rows = [SUMMARY_HEADER]
        for variant, s in self.bench_report.aggregates.items():
            rows.append(
                [
                    variant,
                    str(s.queries),
                    f"{s.mean_dot_products:,.1f}",
                    f"{s.speedup:.2f}",
                    f"{s.mean_wall_time * 1000:.3f}",
                    f"{s.precision:.3f}",
                    f"{s.recall:.3f}",
                ]
            )
        t = Table(rows, (3 * cm, 2 * cm, 3 * cm, 2 * cm, 3 * cm, 1.5 * cm, 1.5 * cm))
        self.set_table_style(t, bg_cmd=self.bg_cmd)
        story.append(t)
        story.append(Spacer(0.1 * cm, 0.5 * cm))

    def draw_histogram(self, story, variant: str, histograms: dict):
        rounds = len(next(iter(histograms.values())))
        rows = [["Round", "Pruned", "Expanded", "Resolved"]]
        for r in range(rounds):
            rows.append(
                [
                    str(r),
                    str(int(histograms["pruned_per_round"][r])),
                    str(int(histograms["expanded_per_round"][r])),
                    str(int(histograms["resolved_per_round"][r])),
                ]
            )
        title = Table([[f"Pools per round: {variant}"]], (12 * cm))
        self.set_table_style(title, bg_cmd=("BACKGROUND", (0, 0), (0, -1), colors.lightgrey))
        t = Table(rows, (3 * cm, 3 * cm, 3 * cm, 3 * cm), repeatRows=1)
        self.set_table_style(t, bg_cmd=self.bg_cmd)
        story.extend([title, t, Spacer(0.1 * cm, 0.5 * cm)])

    def draw_key_values(self, story, title: str, values: dict):
        rows = [[title, ""]]
        for key, value in values.items():
            if isinstance(value, float):
                value = f"{value:,.4g}"
            elif isinstance(value, (list, tuple)):
                value = ", ".join(str(v) for v in value)
            rows.append([key, str(value)])
        t = Table(rows, (6 * cm, 8 * cm))
        self.set_table_style(t, bg_cmd=self.bg_cmd)
        story.append(KeepTogether([t, Spacer(0.1 * cm, 0.5 * cm)]))

    @staticmethod
    def set_table_style(t, bg_cmd=None):
        cmds = [
            ("INNERGRID", (0, 0), (-1, -1), 0.25, colors.black),
            ("VALIGN", (0, 0), (-1, -1), "MIDDLE"),
            ("BOX", (0, 0), (-1, -1), 0.25, colors.black),
            ("FONTSIZE", (0, 0), (-1, -1), 8),
        ]
        if bg_cmd:
            cmds.append(bg_cmd)
        t.setStyle(TableStyle(cmds))
        t.hAlign = "LEFT"
        return t

    def draw_narrative(self, story, title=None, text=None):
        t = Table([[title]], (16 * cm))
        self.set_table_style(t, bg_cmd=("BACKGROUND", (0, 0), (0, -1), colors.lightgrey))
        paragraph = Paragraph(text, self.styles["line_data_large"])
        paragraph.hAlign = "LEFT"
        story.append(KeepTogether([t, Spacer(0.1 * cm, 0.5 * cm), paragraph]))

    def draw_end_of_report(self, story):
        story.append(Paragraph("- End of report -", self.styles["line_label_center"]))
