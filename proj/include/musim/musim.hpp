#pragma once

// Symbolic-music similarity toolkit: MIDI ingestion, performance-event
// tokenization with merged multi-event words, a deterministic decoder-only
// transformer for per-layer activations, sentence-embedding calibration
// (layer averaging, standard normalization, principal-direction removal,
// position weighting), composer-labeled pair sampling, and Spearman-scored
// grid search.

#include "musim/calibration.hpp"
#include "musim/corpus.hpp"
#include "musim/csv.hpp"
#include "musim/error.hpp"
#include "musim/evaluation.hpp"
#include "musim/events.hpp"
#include "musim/linalg.hpp"
#include "musim/model.hpp"
#include "musim/model_io.hpp"
#include "musim/note.hpp"
#include "musim/note_text.hpp"
#include "musim/pairs.hpp"
#include "musim/prng.hpp"
#include "musim/smf.hpp"
#include "musim/spearman.hpp"
#include "musim/vocab.hpp"
