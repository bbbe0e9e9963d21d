// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/generator.hpp"

namespace pgen {

std::vector<std::string> generate(const Transformer& model,
                                  const SearchStrategy& search,
                                  const Vocabulary& vocab,
                                  const Batch& batch) {
  TapePause pause;
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(batch.batch_size()));
  for (int b = 0; b < batch.batch_size(); ++b) {
    std::vector<int> src =
        Transformer::trimmed_row(batch.src_tokens, b, batch.src_lengths[b]);
    std::vector<int> ids = search.decode(model, src);
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (int id : ids)
      if (id >= Vocabulary::kReserved) tokens.push_back(vocab.token(id));
    out.push_back(BpeModel::decode(tokens));
  }
  return out;
}

void write_outputs(AsyncWriter& writer,
                   const std::vector<std::string>& lines) {
  for (const std::string& line : lines) writer.submit(line + "\n");
}

}  // namespace pgen
