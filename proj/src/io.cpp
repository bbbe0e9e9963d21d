// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/io.hpp"

#include <cerrno>
#include <cstring>
#include <filesystem>

namespace pgen {

bool valid_utf8(std::string_view bytes) {
  std::size_t i = 0;
  while (i < bytes.size()) {
    unsigned char c = static_cast<unsigned char>(bytes[i]);
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= bytes.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      unsigned char cc = static_cast<unsigned char>(bytes[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Reject overlong encodings, surrogates, and out-of-range points.
    static constexpr std::uint32_t kMin[4] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra]) return false;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

LineReader::LineReader(std::string path) : path_(std::move(path)) {
  std::error_code ec;
  if (!std::filesystem::exists(path_, ec))
    throw NotFound("no such file: " + path_);
  in_.open(path_, std::ios::binary);
  if (!in_) throw PermissionDenied("cannot open: " + path_);
}

std::optional<std::string> LineReader::next() {
  std::string line;
  if (!std::getline(in_, line)) return std::nullopt;
  ++line_;
  offset_ += line.size() + (in_.eof() ? 0 : 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (!valid_utf8(line))
    throw ParseError(path_ + ": invalid UTF-8",
                     static_cast<long>(line_));
  return line;
}

void LineReader::reset() {
  in_.clear();
  in_.seekg(0);
  offset_ = 0;
  line_ = 0;
}

AsyncWriter::AsyncWriter(std::string path) : path_(std::move(path)) {
  out_.open(path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open for writing: " + path_);
  worker_ = std::thread([this] { worker_loop(); });
}

AsyncWriter::~AsyncWriter() {
  try {
    close();
  } catch (...) {
    // Destruction must not throw; deferred errors are lost here.
  }
}

void AsyncWriter::submit(std::string payload) {
  std::lock_guard lock(mu_);
  if (closed_) throw WriterClosed("submit after close: " + path_);
  queue_.push_back(std::move(payload));
  cv_worker_.notify_one();
}

void AsyncWriter::flush_barrier() {
  std::unique_lock lock(mu_);
  cv_producer_.wait(lock, [this] { return queue_.empty() && !writing_; });
  out_.flush();
  if (!out_) {
    out_.clear();
    if (!deferred_)
      deferred_ = std::make_exception_ptr(IoError("flush failed: " + path_));
  }
  if (deferred_) {
    std::exception_ptr err = deferred_;
    deferred_ = nullptr;
    std::rethrow_exception(err);
  }
}

void AsyncWriter::close() {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    closed_ = true;
    cv_worker_.notify_one();
  }
  if (worker_.joinable()) worker_.join();
  out_.flush();
  out_.close();
  std::exception_ptr err;
  {
    std::lock_guard lock(mu_);
    err = deferred_;
    deferred_ = nullptr;
  }
  if (err) std::rethrow_exception(err);
}

bool AsyncWriter::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::size_t AsyncWriter::queue_depth() const {
  std::lock_guard lock(mu_);
  return queue_.size() + (writing_ ? 1 : 0);
}

void AsyncWriter::worker_loop() {
  while (true) {
    std::string payload;
    {
      std::unique_lock lock(mu_);
      cv_worker_.wait(lock, [this] { return !queue_.empty() || closed_; });
      if (queue_.empty()) return;
      payload = std::move(queue_.front());
      queue_.pop_front();
      writing_ = true;
    }
    out_.write(payload.data(),
               static_cast<std::streamsize>(payload.size()));
    bool ok = static_cast<bool>(out_);
    if (!ok) out_.clear();
    {
      std::lock_guard lock(mu_);
      writing_ = false;
      if (!ok && !deferred_)
        deferred_ = std::make_exception_ptr(
            IoError("write failed: " + path_ + ": " + std::strerror(errno)));
      if (queue_.empty()) cv_producer_.notify_all();
    }
  }
}

}  // namespace pgen
