// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Local-filesystem reading/writing beneath datasets and output generation.
// AsyncWriter keeps submit() non-blocking; write failures surface at the
// next flush_barrier().

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "pgen/error.hpp"

namespace pgen {

bool valid_utf8(std::string_view bytes);

class LineReader {
 public:
  explicit LineReader(std::string path);

  // Next line without its terminator, or nullopt at end of file.
  // Throws ParseError on invalid UTF-8.
  std::optional<std::string> next();
  void reset();

  std::uint64_t byte_offset() const { return offset_; }
  std::uint64_t line_number() const { return line_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::uint64_t offset_ = 0;
  std::uint64_t line_ = 0;
};

class AsyncWriter {
 public:
  explicit AsyncWriter(std::string path);
  ~AsyncWriter();

  AsyncWriter(const AsyncWriter&) = delete;
  AsyncWriter& operator=(const AsyncWriter&) = delete;

  void submit(std::string payload);
  // Blocks until every submitted payload is on disk, then rethrows the first
  // deferred write error, if any.
  void flush_barrier();
  void close();

  bool closed() const;
  std::size_t queue_depth() const;

 private:
  void worker_loop();

  std::string path_;
  std::ofstream out_;
  mutable std::mutex mu_;
  std::condition_variable cv_producer_;
  std::condition_variable cv_worker_;
  std::deque<std::string> queue_;
  bool closed_ = false;
  bool writing_ = false;
  std::exception_ptr deferred_;
  std::thread worker_;
};

}  // namespace pgen
