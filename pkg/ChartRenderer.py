import os
from pathlib import Path

os.environ.setdefault("PYGAME_HIDE_SUPPORT_PROMPT", "1")
os.environ.setdefault("SDL_VIDEODRIVER", "dummy")

import pygame  # noqa: E402

BACKGROUND_COLOR = (255, 255, 255)
AXIS_COLOR = (40, 40, 40)
TEXT_COLOR = (20, 20, 20)
SERIES_COLORS = [(0, 90, 200), (220, 80, 0), (0, 150, 70)]


class ChartWriteError(OSError):
    """Raised when a chart image cannot be saved."""


class ChartRenderer:
    """
    Draws static charts of a simulation run onto off-screen pygame surfaces
    and saves them as image files. No window is ever opened.
    """

    def __init__(self, size=(900, 500), margin=60):
        """
        Args:
            size: Width and height of every chart in pixels
            margin: Space reserved around the plot area for axes and labels
        """
        pygame.font.init()
        self.font = pygame.font.SysFont("Courier New", 14)
        self.size = size
        self.width, self.height = size
        self.margin = margin

    def _plot_area(self):
        left = self.margin
        top = self.margin // 2
        right = self.width - self.margin // 2
        bottom = self.height - self.margin
        return left, top, right, bottom

    def _convert_to_screen_coords(
        self, index: int, value: float, count: int, y_min: float, y_max: float
    ):
        """
        Converts a sample (slot index, value) to pixel coordinates inside the
        plot area.
        """
        left, top, right, bottom = self._plot_area()
        x_span = max(count - 1, 1)
        y_span = (y_max - y_min) or 1.0
        x = left + (right - left) * index / x_span
        y = bottom - (bottom - top) * (value - y_min) / y_span
        return (x, y)

    def render_text(self, surface, text, position, color=TEXT_COLOR):
        text_surface = self.font.render(text, True, color)
        surface.blit(text_surface, position)

    def _draw_axes(self, surface, title, y_label, y_min, y_max):
        left, top, right, bottom = self._plot_area()
        pygame.draw.line(surface, AXIS_COLOR, (left, bottom), (right, bottom))
        pygame.draw.line(surface, AXIS_COLOR, (left, top), (left, bottom))
        self.render_text(surface, title, (left, 5))
        self.render_text(surface, f"{y_max:.2f}", (5, top))
        self.render_text(surface, f"{y_min:.2f}", (5, bottom - 14))
        self.render_text(surface, y_label, (5, self.height // 2))
        self.render_text(surface, "slot", (right - 40, bottom + 20))

    def render_line_chart(
        self, series: dict[str, list[float]], title: str, y_label: str, path
    ) -> Path:
        """
        Draws one line per named series over the slot axis and saves the
        chart to path.
        """
        surface = pygame.Surface(self.size)
        surface.fill(BACKGROUND_COLOR)

        values = [v for samples in series.values() for v in samples]
        y_min = min(min(values), 0.0) if values else 0.0
        y_max = max(values) if values else 1.0
        self._draw_axes(surface, title, y_label, y_min, y_max)

        for i, (name, samples) in enumerate(series.items()):
            color = SERIES_COLORS[i % len(SERIES_COLORS)]
            points = [
                self._convert_to_screen_coords(
                    index, value, len(samples), y_min, y_max
                )
                for index, value in enumerate(samples)
            ]
            if len(points) > 1:
                pygame.draw.lines(surface, color, False, points, 2)
            elif points:
                pygame.draw.circle(surface, color, points[0], 3)
            self.render_text(
                surface, name, (self.width - 200, 5 + 16 * i), color
            )

        return self._save(surface, path)

    def render_ratio_chart(self, ratios: dict[str, float], title: str, path):
        """
        Draws one horizontal bar per named fraction in [0, 1].
        """
        surface = pygame.Surface(self.size)
        surface.fill(BACKGROUND_COLOR)
        left, top, right, bottom = self._plot_area()
        self.render_text(surface, title, (left, 5))

        bar_height = 30
        for i, (name, ratio) in enumerate(ratios.items()):
            y = top + 20 + i * (bar_height + 20)
            width = (right - left) * max(0.0, min(ratio, 1.0))
            color = SERIES_COLORS[i % len(SERIES_COLORS)]
            pygame.draw.rect(
                surface, AXIS_COLOR, (left, y, right - left, bar_height), 1
            )
            pygame.draw.rect(surface, color, (left, y, width, bar_height))
            self.render_text(surface, f"{name} {ratio:.4f}", (left, y - 16))

        return self._save(surface, path)

    def _save(self, surface, path) -> Path:
        path = Path(path)
        try:
            pygame.image.save(surface, str(path))
        except pygame.error as e:
            raise ChartWriteError(f"cannot write chart {path}: {e}") from e
        return path
