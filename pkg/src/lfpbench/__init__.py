"""Least-fixed-point logic over finite structures: evaluation, stages and dividing lines."""

__version__ = "0.1.0"

from .formula import Formula, FormulaError, PartitionedFormula, Polarity, free_variables, polarity, substitute_relation
from .parser import ParseError, Signature, parse_formula
from .render import render
from .structures import FiniteStructure, load_structure, generate_family, disjoint_union
from .evaluator import StageTable, evaluate, lfp_stages, closure_ordinal, stage_comparison, unfold_lfp, unfold_over_family
from .dividing import (
    Budget,
    BudgetExhausted,
    PropertyCertificate,
    PropertyKind,
    build_property_sentence,
    detect,
    verify_witness,
)
from .constructions import containment_preorder, height_formula, interpret, relativize, stage_preorder_formula
from .indiscernible import build_phi_eta, derive_ip_witness, extract_indiscernible
from .profile import FamilyProfile, profile_family
