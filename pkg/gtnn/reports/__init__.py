from .bench_pdf_report import BenchPdfReport
from .numbered_canvas import NumberedCanvas
from .report import Report
from .utils import write_report_to_pdf, write_reports_to_pdf
