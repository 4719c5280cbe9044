from __future__ import annotations

import collections.abc
import dataclasses
import logging
import re
import typing as ty

import numpy as np
import sympy
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from ..error import MapFamilyError, NotConvergedError
from . import FamilyId, FloatArray, stack_jacobian

_logger = logging.getLogger(__name__)

X, Y = sympy.symbols("x y", real=True)

FD_STEP = 1e-6
INVERSE_TOL = 1e-13
INVERSE_MAX_ITERS = 40

_ALLOWED_TEXT = re.compile(r"^[\w\s.+\-*/()^,]*$")
_ATTRIBUTE_ACCESS = re.compile(r"[A-Za-z_)\]]\s*\.")

_FUNCTIONS: dict[str, ty.Any] = {
    "Integer": sympy.Integer,
    "Float": sympy.Float,
    "Rational": sympy.Rational,
    "Symbol": sympy.Symbol,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "tan": sympy.tan,
    "exp": sympy.exp,
    "log": sympy.log,
    "sqrt": sympy.sqrt,
    "tanh": sympy.tanh,
    "pi": sympy.pi,
}

_Compiled = collections.abc.Callable[[FloatArray, FloatArray], FloatArray]


def parse_expression(text: str, constants: collections.abc.Mapping[str, float]) -> sympy.Expr:
    """Parse an arithmetic expression in ``x``, ``y`` and the named numeric constants

    Only arithmetic, the elementary functions in ``_FUNCTIONS`` and ``pi`` are accepted.

    :param text: Expression text, ``^`` is accepted for powers
    :param constants: Numeric parameters substituted into the expression
    :raises MapFamilyError: Raised for malformed expressions or unknown names
    :return: Expression in the symbols ``x`` and ``y``
    """
    if not _ALLOWED_TEXT.match(text) or "__" in text or _ATTRIBUTE_ACCESS.search(text):
        raise MapFamilyError(f"Expression '{text}' contains characters that are not allowed")

    local_dict: dict[str, ty.Any] = {"x": X, "y": Y}
    local_dict.update({name: sympy.Float(value) for name, value in constants.items()})
    try:
        expr = parse_expr(
            text,
            local_dict=local_dict,
            global_dict=dict(_FUNCTIONS),
            transformations=standard_transformations + (convert_xor,),
        )
    except (SyntaxError, TypeError, ValueError) as exc:
        raise MapFamilyError(f"Could not parse expression '{text}': {exc}") from exc

    if unknown := {str(symbol) for symbol in expr.free_symbols} - {"x", "y"}:
        raise MapFamilyError(f"Expression '{text}' uses unknown names {sorted(unknown)}")
    return ty.cast(sympy.Expr, expr)


def _compile(expr: sympy.Expr) -> _Compiled:
    func = sympy.lambdify((X, Y), expr, modules="numpy")

    def evaluate(x: FloatArray, y: FloatArray) -> FloatArray:
        return np.broadcast_to(np.asarray(func(x, y), dtype=np.float64), np.broadcast(x, y).shape).copy()

    return evaluate


@dataclasses.dataclass
class UserFormula:
    """Map given by expression strings for ``x'`` and ``y'``

    The Jacobian entries are taken from the ``jxx``, ``jxy``, ``jyx`` and ``jyy`` expressions when given. Otherwise
    central differences with step :data:`FD_STEP` are used, or the formulas are differentiated symbolically when
    ``jacobian = "symbolic"`` is configured. Without ``ix``/``iy`` expressions the inverse is computed by Newton's
    method on the forward map.
    """

    fx: str
    fy: str
    constants: dict[str, float]
    ix: str | None = None
    iy: str | None = None
    jacobian_entries: tuple[str, str, str, str] | None = None
    finite_difference: bool = True
    family_id: ty.ClassVar[FamilyId] = FamilyId.USER

    def __post_init__(self) -> None:
        fx = parse_expression(self.fx, self.constants)
        fy = parse_expression(self.fy, self.constants)
        self._fx = _compile(fx)
        self._fy = _compile(fy)
        if self.jacobian_entries is not None:
            self._jac = [_compile(parse_expression(entry, self.constants)) for entry in self.jacobian_entries]
        else:
            self._jac = [_compile(sympy.diff(expr, var)) for expr in (fx, fy) for var in (X, Y)]
        self._ix: _Compiled | None = None
        self._iy: _Compiled | None = None
        if self.ix is not None and self.iy is not None:
            self._ix = _compile(parse_expression(self.ix, self.constants))
            self._iy = _compile(parse_expression(self.iy, self.constants))

    def __getstate__(self) -> dict[str, ty.Any]:
        return {field.name: getattr(self, field.name) for field in dataclasses.fields(self)}

    def __setstate__(self, state: dict[str, ty.Any]) -> None:
        self.__dict__.update(state)
        self.__post_init__()

    def forward(self, r: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        return self._fx(r, y), self._fy(r, y)

    def jacobian(self, r: FloatArray, y: FloatArray) -> FloatArray:
        if self.finite_difference and self.jacobian_entries is None:
            return self._finite_difference_jacobian(r, y)
        return stack_jacobian(*(entry(r, y) for entry in self._jac))

    def _finite_difference_jacobian(self, r: FloatArray, y: FloatArray) -> FloatArray:
        xp, yp = self.forward(r + FD_STEP, y)
        xm, ym = self.forward(r - FD_STEP, y)
        xq, yq = self.forward(r, y + FD_STEP)
        xn, yn = self.forward(r, y - FD_STEP)
        scale = 0.5 / FD_STEP
        return stack_jacobian((xp - xm) * scale, (xq - xn) * scale, (yp - ym) * scale, (yq - yn) * scale)

    def inverse(self, r: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        if self._ix is not None and self._iy is not None:
            return self._ix(r, y), self._iy(r, y)

        # Start from the point displaced backwards by the forward displacement at the target
        fx, fy = self.forward(r, y)
        x = np.array(2.0 * r - fx, dtype=np.float64)
        v = np.array(2.0 * y - fy, dtype=np.float64)
        for _ in range(INVERSE_MAX_ITERS):
            gx, gy = self.forward(x, v)
            gx = gx - r
            gy = gy - y
            if np.all(np.maximum(np.abs(gx), np.abs(gy)) < INVERSE_TOL):
                return x, v
            jac = self.jacobian(x, v)
            det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
            x = x - (jac[..., 1, 1] * gx - jac[..., 0, 1] * gy) / det
            v = v - (jac[..., 0, 0] * gy - jac[..., 1, 0] * gx) / det
        raise NotConvergedError(f"Inverse of the user-defined map did not converge in {INVERSE_MAX_ITERS} iterations")


def make_formula(params: collections.abc.Mapping[str, float | str]) -> UserFormula:
    expressions = {name: value for name, value in params.items() if isinstance(value, str)}
    constants = {name: float(value) for name, value in params.items() if not isinstance(value, str)}
    try:
        fx, fy = expressions.pop("fx"), expressions.pop("fy")
    except KeyError:
        raise MapFamilyError("Family 'user' requires the expressions 'fx' and 'fy'") from None

    jacobian_mode = expressions.pop("jacobian", "finite-difference")
    if jacobian_mode not in ("symbolic", "finite-difference"):
        raise MapFamilyError(f"Unknown Jacobian mode '{jacobian_mode}'")

    names = ("jxx", "jxy", "jyx", "jyy")
    given = [expressions.pop(name) for name in names if name in expressions]
    if given and len(given) != len(names):
        raise MapFamilyError(f"Jacobian expressions {', '.join(names)} must be given together")
    entries = (given[0], given[1], given[2], given[3]) if given else None

    ix, iy = expressions.pop("ix", None), expressions.pop("iy", None)
    if (ix is None) != (iy is None):
        raise MapFamilyError("Inverse expressions 'ix' and 'iy' must be given together")
    if expressions:
        _logger.warning("Ignoring unknown expression parameters %s", sorted(expressions))

    return UserFormula(
        fx=fx,
        fy=fy,
        constants=constants,
        ix=ix,
        iy=iy,
        jacobian_entries=entries,
        finite_difference=jacobian_mode == "finite-difference",
    )
