from unittest import TestCase

import numpy as np
from pypdf import PdfReader

from gtnn.bench import BenchReport, run_static
from gtnn.conf import settings
from gtnn.reports import (
    BenchPdfReport,
    NumberedCanvas,
    write_report_to_pdf,
    write_reports_to_pdf,
)

from .fixtures import four_vector_store


class TestBenchPdfReport(TestCase):
    def setUp(self):
        self.bench_report = run_static(
            four_vector_store(), np.array([[1.0, 0.0], [0.0, 1.0]]), 0.7
        )
        self.bench_report.streaming = {"inserted": 2, "additions_per_point": [2]}

    def tearDown(self):
        settings.reset()

    def test_overview_text(self):
        text = BenchPdfReport(self.bench_report).overview_text
        self.assertIn("2 queries over 4 vectors", text)
        self.assertIn("variants: sum, max, and exhaustive", text)
        self.assertIn("All results matched", text)

    def test_overview_singular_and_mismatch(self):
        queries = np.array([[1.0, 0.0]])
        report = run_static(four_vector_store(), queries, 0.7, variants=("sum",))
        report.mismatches.append(("sum", 1))
        text = BenchPdfReport(report).overview_text
        self.assertIn("1 query over 4 vectors", text)
        self.assertIn("variant: sum", text)
        self.assertIn("1 mismatch against", text)

    def test_write_report_to_pdf(self):
        buffer = write_report_to_pdf(BenchPdfReport(self.bench_report))
        self.assertTrue(buffer.getvalue().startswith(b"%PDF"))
        reader = PdfReader(buffer)
        self.assertFalse(reader.is_encrypted)
        self.assertGreaterEqual(len(reader.pages), 1)
        self.assertIn("RANGE SEARCH BENCHMARK", reader.pages[0].extract_text())

    def test_encrypted_merge(self):
        reports = [
            BenchPdfReport(self.bench_report),
            BenchPdfReport(BenchReport(N=1, d=1, rho=0.5)),
        ]
        buffer = write_reports_to_pdf(reports, password="secret")
        reader = PdfReader(buffer)
        self.assertTrue(reader.is_encrypted)
        self.assertTrue(reader.decrypt("secret"))
        self.assertGreaterEqual(len(reader.pages), 2)

    def test_watermark_from_settings(self):
        settings.configure(GTNN_REPORTS_WATERMARK_WORD="DRAFT")
        report = BenchPdfReport(self.bench_report)
        self.assertEqual(report.numbered_canvas.watermark_word, "DRAFT")
        self.assertIsNone(NumberedCanvas.watermark_word)
        buffer = write_report_to_pdf(report)
        self.assertIn(b"DRAFT", PdfReader(buffer).pages[0].get_contents().get_data())

    def test_no_watermark_by_default(self):
        report = BenchPdfReport(self.bench_report)
        self.assertIs(report.numbered_canvas, NumberedCanvas)
