"""Named attribution methods: a path generator plus an attribution engine.

Method tags are "IG", "BlurIG" or "GIG", optionally suffixed with "+IDGI" to
swap the Riemann rule for the per-step important-direction rewrite.
"""

from __future__ import annotations

from dataclasses import dataclass

from .attribution import AttributionMap, idgi_attribution, riemann_attribution
from .errors import InvalidArgumentError
from .image import Image
from .models import DifferentiableModel
from .paths import (
    DEFAULT_BLUR_MAX_SCALE,
    DEFAULT_GUIDED_FRACTION,
    PathSample,
    black_like,
    blur_path,
    guided_path,
    straight_line_path,
)

PATH_FAMILIES = ("IG", "BlurIG", "GIG")
METHOD_TAGS = tuple(f"{fam}{suffix}" for fam in PATH_FAMILIES for suffix in ("", "+IDGI"))


@dataclass(frozen=True)
class MethodSpec:
    family: str
    use_idgi: bool

    @property
    def tag(self) -> str:
        return self.family + ("+IDGI" if self.use_idgi else "")


def parse_method(tag: str) -> MethodSpec:
    name = tag.strip()
    use_idgi = False
    if name.endswith("+IDGI"):
        use_idgi = True
        name = name[: -len("+IDGI")]
    if name not in PATH_FAMILIES:
        raise InvalidArgumentError(
            f"unknown method {tag!r}; expected one of {', '.join(METHOD_TAGS)}"
        )
    return MethodSpec(family=name, use_idgi=use_idgi)


def build_path(spec: MethodSpec, model: DifferentiableModel, c: int, img: Image, steps: int,
               blur_max_scale: float = DEFAULT_BLUR_MAX_SCALE,
               guided_fraction: float = DEFAULT_GUIDED_FRACTION) -> PathSample:
    if spec.family == "IG":
        return straight_line_path(black_like(img), img, steps)
    if spec.family == "BlurIG":
        return blur_path(img, max_scale=blur_max_scale, steps=steps)
    return guided_path(model, c, black_like(img), img, steps, fraction=guided_fraction)


def compute_attribution(method: str | MethodSpec, model: DifferentiableModel, c: int,
                        img: Image, steps: int,
                        blur_max_scale: float = DEFAULT_BLUR_MAX_SCALE,
                        guided_fraction: float = DEFAULT_GUIDED_FRACTION) -> AttributionMap:
    spec = parse_method(method) if isinstance(method, str) else method
    path = build_path(spec, model, c, img, steps,
                      blur_max_scale=blur_max_scale, guided_fraction=guided_fraction)
    if spec.use_idgi:
        attr = idgi_attribution(model, c, path)
    else:
        attr = riemann_attribution(model, c, path)
    return AttributionMap(values=attr.values, method=spec.tag, steps=attr.steps,
                          residual=attr.residual, f_start=attr.f_start, f_end=attr.f_end)
