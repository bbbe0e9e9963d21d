// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Inference-time wrapper: decode each source sentence with a search
// strategy, then post-process on the host side (strip reserved ids, map ids
// back to tokens, undo BPE). Gradient-free by construction.

#pragma once

#include <string>
#include <vector>

#include "pgen/io.hpp"
#include "pgen/pipeline.hpp"
#include "pgen/search.hpp"

namespace pgen {

// One detokenized hypothesis per batch row, input order preserved. Records
// nothing on any active tape and leaves no parameter gradients behind.
std::vector<std::string> generate(const Transformer& model,
                                  const SearchStrategy& search,
                                  const Vocabulary& vocab, const Batch& batch);

// One hypothesis per line.
void write_outputs(AsyncWriter& writer,
                   const std::vector<std::string>& lines);

}  // namespace pgen
