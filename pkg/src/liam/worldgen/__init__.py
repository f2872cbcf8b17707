"""Synthetic gridworld standing in for ALFRED: rooms, expert transcripts, episodes."""
from .vocab import (ACTIONS, NUM_ACTIONS, NUM_OBJECTS, OBJECT_NAMES, PAD, STOP, VOCAB,
                    VOCAB_SIZE, detokenize, tokenize)
from .world import (World, WorldConfig, accumulate_map, generate_world, layout_map,
                    render_frame, step, InvalidAction)
from .planner import Task, Unreachable, plan_expert, sample_task, task_achieved
from .episodes import (DatasetFormatError, Episode, emit_episode, generate_split, iter_dataset,
                       read_dataset, replay, sample_episode, write_dataset)
