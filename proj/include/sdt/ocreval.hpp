#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sdt {

// Lenient UTF-8 decoding to Unicode scalar values: every invalid byte (or
// truncated/overlong sequence) becomes U+FFFD and decoding resynchronises at
// the next byte.
std::vector<char32_t> decode_utf8_lenient(std::string_view text);

// Byte offset of the first invalid UTF-8 sequence, or npos if valid.
std::size_t find_utf8_error(std::string_view text);

// Edit distance over Unicode scalar values (insert/delete/substitute, all
// cost 1).
std::size_t levenshtein_distance(const std::vector<char32_t>& a,
                                 const std::vector<char32_t>& b);

// 1 - distance / max(|a|, |b|) over scalar values; two empty strings match
// perfectly (1.0).
double levenshtein_ratio(std::string_view a, std::string_view b);

// Cosine similarity of character-frequency vectors over the 62 ASCII
// letters/digits (case-sensitive). If either text has no counted characters
// the result is 1.0 when both are empty in those dimensions, else 0.0.
double char_freq_cosine(std::string_view a, std::string_view b);

struct TextComparison {
  double levenshtein = 0.0;
  double cosine = 0.0;
};

TextComparison compare_texts(std::string_view reference,
                             std::string_view candidate);

// Runs an external OCR engine on one image. `engine_command` must contain
// the placeholder {input}, which is replaced by the shell-quoted image path;
// the command runs under /bin/sh -c. Returns the engine's stdout with
// trailing whitespace stripped.
//
// Throws ExternalToolNotFound when the command cannot be launched (shell
// exit 127), ExternalToolFailure (carrying stderr) on a non-zero exit, and
// Utf8DecodeError when stdout is not valid UTF-8.
std::string run_ocr(const std::string& image_path,
                    const std::string& engine_command);

// run_ocr over many images with at most `jobs` engine processes in flight.
// Results keep input order; the first failure is rethrown after all running
// jobs finish.
std::vector<std::string> run_ocr_batch(const std::vector<std::string>& paths,
                                       const std::string& engine_command,
                                       int jobs);

}  // namespace sdt
