"""Declarative factual/contrastive explanations for decision trees.

Trees are embedded as disjunctions of exact linear constraints; a closed
algebra of operators (instance paths, user/type constraints, cross, sat,
projection, relaxation, infimum) answers factual, contrastive and minimal
contrastive queries, including for under-specified instances and across
several models.
"""

from .constraints import (Conj, LinTerm, Primitive, Rat, Relation, Tag,
                          Theory, VarId, conjoin, evaluate, format_rat,
                          normalize, rat, render_conj, render_primitive)
from .polyhedra import FeasibilityResult, feasible, minimal_form, project, relax
from .milp import MilpResult, MilpStatus, bb_inf, int_feasible
from .model import (DecisionTreeModel, Feature, FeatureSchema, PathFact,
                    extract_paths, instantiate, learn_tree, load_tree,
                    predict, sample_neighborhood, save_tree, tree_from_json,
                    tree_to_json)
from .algebra import (Cross, EvalContext, Expr, Inf, Inst, Lit, Project,
                      Relax, Sat, TypeC, UserC, format_expr, solve)
from .session import (AnswerBundle, DistanceSpec, Rule, Session, SessionError,
                      structured_record, transcript_lines)

__version__ = "0.1.0"
