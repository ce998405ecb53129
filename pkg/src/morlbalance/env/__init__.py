"""Simulated slot-filling dialogue environment."""

from .belief import BeliefState, belief_update, focus_update
from .dialogue import (ActionSpace, DialogueEnv, DialogueEpisode, DialogueRuntimeError, Turn,
                       evaluate_success, run_dialogue, write_transcripts)
from .ontology import (DOMAIN_STATS, DomainOntology, OntologyError, benchmark_ontology,
                       db_lookup, generate_ontology, load_ontology)
from .user import (DONTCARE, AgendaState, Observation, SystemAct, UserAct, UserGoal,
                   corrupt_act, initial_act, sample_goal, user_step)
