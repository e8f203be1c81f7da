from __future__ import annotations

from reportlab.lib.pagesizes import A4
from reportlab.pdfgen import canvas

from ..conf import settings


class NumberedCanvas(canvas.Canvas):
    """Canvas that defers page output until save so each page can be
    stamped "Page x of y" and, optionally, a diagonal watermark.
    """

    footer_row_height = 25
    watermark_word: str | None = None
    watermark_font: tuple[str, int] | None = None
    pagesize = A4

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._saved_page_states = []

    def showPage(self):
        self._saved_page_states.append(dict(self.__dict__))
        self._startPage()

    def save(self):
        page_count = len(self._saved_page_states)
        watermark_word = self.watermark_word or getattr(
            settings, "GTNN_REPORTS_WATERMARK_WORD", None
        )
        for state in self._saved_page_states:
            self.__dict__.update(state)
            self.draw_page_number(page_count)
            if watermark_word:
                self.draw_watermark(watermark_word)
            super().showPage()
        super().save()

    def draw_page_number(self, page_count: int):
        width, _ = self.pagesize
        self.setFont("Helvetica", 6)
        self.drawCentredString(
            width / 2, self.footer_row_height, f"Page {self.getPageNumber()} of {page_count}"
        )

    def draw_watermark(self, word: str):
        font = self.watermark_font or getattr(
            settings, "GTNN_REPORTS_WATERMARK_FONT", ("Helvetica", 100)
        )
        width, height = self.pagesize
        self.saveState()
        self.setFont(*font)
        self.setFillGray(0.5, 0.5)
        self.translate(width / 2, height / 2)
        self.rotate(45)
        self.drawCentredString(0, 0, word)
        self.restoreState()
