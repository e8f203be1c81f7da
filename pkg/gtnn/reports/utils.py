from __future__ import annotations

from io import BytesIO
from typing import Iterable

from pypdf import PdfWriter

from .report import Report


def write_report_to_pdf(report: Report) -> BytesIO:
    """Returns an unencrypted PDF buffer for one report."""
    buffer = BytesIO()
    report.build(buffer)
    buffer.seek(0)
    return buffer


def write_reports_to_pdf(reports: Iterable[Report], password: str | None = None) -> BytesIO:
    """Merges one or more reports into a single PDF buffer, AES-256
    encrypted when `password` is given.

    Write the buffer to a file with ``path.write_bytes(buffer.getbuffer())``.
    """
    merger = PdfWriter()
    for report in reports:
        buffer = write_report_to_pdf(report)
        merger.append(fileobj=buffer)
        buffer.close()
    if password:
        merger.encrypt(password, algorithm="AES-256")
    merged_buffer = BytesIO()
    merger.write(merged_buffer)
    merged_buffer.seek(0)
    return merged_buffer
