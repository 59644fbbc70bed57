"""Random intermittent maps: inducing schemes, tail statistics and quenched
correlations for i.i.d. compositions of LSV-type maps."""

from .errors import AxiomError, ConfigError, DomainError, NumericalInvariantError
from .maps import (CLASSIC, FAMILIES, MOVING, MapDescriptor, ParameterWindow,
                   make_map, schwarzian, validate_axioms)
from .words import OmegaWord, constant_word, draw_word, shift, split_seed

__all__ = [
    "AxiomError", "ConfigError", "DomainError", "NumericalInvariantError",
    "CLASSIC", "FAMILIES", "MOVING", "MapDescriptor", "ParameterWindow",
    "make_map", "schwarzian", "validate_axioms",
    "OmegaWord", "constant_word", "draw_word", "shift", "split_seed",
]
