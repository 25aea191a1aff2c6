#include "sdt/ocreval.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "sdt/errors.hpp"

namespace sdt {

namespace {

// Decodes one UTF-8 sequence starting at `i`; returns the code point and
// advances `i`, or returns U+FFFD (advancing by one byte) on any violation.
char32_t decode_one(std::string_view s, std::size_t& i, bool& valid) {
  const auto byte = [&](std::size_t k) {
    return static_cast<unsigned char>(s[k]);
  };
  valid = true;
  const unsigned char b0 = byte(i);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  char32_t min = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
    min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
    min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
    min = 0x10000;
  } else {
    ++i;
    valid = false;
    return 0xFFFD;
  }
  if (i + static_cast<std::size_t>(len) > s.size()) {
    ++i;
    valid = false;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const unsigned char bk = byte(i + static_cast<std::size_t>(k));
    if ((bk & 0xC0) != 0x80) {
      ++i;
      valid = false;
      return 0xFFFD;
    }
    cp = (cp << 6) | (bk & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    ++i;
    valid = false;
    return 0xFFFD;
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

}  // namespace

std::vector<char32_t> decode_utf8_lenient(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  bool valid = false;
  while (i < text.size()) out.push_back(decode_one(text, i, valid));
  return out;
}

std::size_t find_utf8_error(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t at = i;
    bool valid = false;
    decode_one(text, i, valid);
    if (!valid) return at;
  }
  return std::string_view::npos;
}

std::size_t levenshtein_distance(const std::vector<char32_t>& a,
                                 const std::vector<char32_t>& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double levenshtein_ratio(std::string_view a, std::string_view b) {
  const std::vector<char32_t> ua = decode_utf8_lenient(a);
  const std::vector<char32_t> ub = decode_utf8_lenient(b);
  const std::size_t longest = std::max(ua.size(), ub.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein_distance(ua, ub)) /
                   static_cast<double>(longest);
}

namespace {

// Index into the 62-dimensional [a-z][A-Z][0-9] frequency vector, or -1.
int freq_dim(char32_t cp) {
  if (cp >= U'a' && cp <= U'z') return static_cast<int>(cp - U'a');
  if (cp >= U'A' && cp <= U'Z') return 26 + static_cast<int>(cp - U'A');
  if (cp >= U'0' && cp <= U'9') return 52 + static_cast<int>(cp - U'0');
  return -1;
}

std::array<double, 62> freq_vector(std::string_view text) {
  std::array<double, 62> v{};
  for (char32_t cp : decode_utf8_lenient(text)) {
    const int d = freq_dim(cp);
    if (d >= 0) v[static_cast<std::size_t>(d)] += 1.0;
  }
  return v;
}

}  // namespace

double char_freq_cosine(std::string_view a, std::string_view b) {
  const std::array<double, 62> va = freq_vector(a);
  const std::array<double, 62> vb = freq_vector(b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < 62; ++i) {
    dot += va[i] * vb[i];
    na += va[i] * va[i];
    nb += vb[i] * vb[i];
  }
  if (na == 0.0 || nb == 0.0) return (na == 0.0 && nb == 0.0) ? 1.0 : 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

TextComparison compare_texts(std::string_view reference,
                             std::string_view candidate) {
  return {levenshtein_ratio(reference, candidate),
          char_freq_cosine(reference, candidate)};
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  out += "'";
  return out;
}

std::string substitute_input(const std::string& command,
                             const std::string& path) {
  const std::string placeholder = "{input}";
  if (command.find(placeholder) == std::string::npos)
    throw std::invalid_argument(
        "engine command must contain the {input} placeholder");
  std::string out;
  std::size_t pos = 0;
  const std::string quoted = shell_quote(path);
  while (true) {
    const std::size_t hit = command.find(placeholder, pos);
    if (hit == std::string::npos) {
      out += command.substr(pos);
      break;
    }
    out += command.substr(pos, hit - pos);
    out += quoted;
    pos = hit + placeholder.size();
  }
  return out;
}

struct ChildResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

ChildResult run_shell(const std::string& command) {
  int out_pipe[2], err_pipe[2];
  if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0)
    throw std::runtime_error("failed to create pipes for engine process");

  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("failed to fork engine process");
  if (pid == 0) {
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(err_pipe[1], STDERR_FILENO);
    close(out_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[0]);
    close(err_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(out_pipe[1]);
  close(err_pipe[1]);

  ChildResult result;
  struct Stream {
    int fd;
    std::string* sink;
    bool open = true;
  } streams[2] = {{out_pipe[0], &result.out}, {err_pipe[0], &result.err}};

  char buf[4096];
  while (streams[0].open || streams[1].open) {
    pollfd fds[2];
    nfds_t nfds = 0;
    for (const Stream& s : streams)
      if (s.open) fds[nfds++] = {s.fd, POLLIN, 0};
    if (poll(fds, nfds, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    nfds_t fi = 0;
    for (Stream& s : streams) {
      if (!s.open) continue;
      const pollfd& p = fds[fi++];
      if (!(p.revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const ssize_t got = read(s.fd, buf, sizeof buf);
      if (got > 0) {
        s.sink->append(buf, static_cast<std::size_t>(got));
      } else {
        close(s.fd);
        s.open = false;
      }
    }
  }

  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFEXITED(status))
    result.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status))
    result.exit_code = 128 + WTERMSIG(status);
  return result;
}

}  // namespace

std::string run_ocr(const std::string& image_path,
                    const std::string& engine_command) {
  const std::string command = substitute_input(engine_command, image_path);
  ChildResult r = run_shell(command);

  if (r.exit_code == 127)
    throw ExternalToolNotFound("OCR engine not found: '" + command + "'");
  if (r.exit_code != 0)
    throw ExternalToolFailure("OCR engine exited with code " +
                                  std::to_string(r.exit_code) + ": '" +
                                  command + "'",
                              r.err);
  const std::size_t bad = find_utf8_error(r.out);
  if (bad != std::string::npos)
    throw Utf8DecodeError("OCR engine produced invalid UTF-8 at byte " +
                          std::to_string(bad));
  while (!r.out.empty() &&
         (r.out.back() == '\n' || r.out.back() == '\r' ||
          r.out.back() == ' ' || r.out.back() == '\t' || r.out.back() == '\f'))
    r.out.pop_back();
  return r.out;
}

std::vector<std::string> run_ocr_batch(const std::vector<std::string>& paths,
                                       const std::string& engine_command,
                                       int jobs) {
  if (jobs < 1) throw std::invalid_argument("run_ocr_batch: jobs < 1");
  std::vector<std::string> results(paths.size());
  if (paths.empty()) return results;

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  const auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= paths.size()) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error) return;
      }
      try {
        results[i] = run_ocr(paths[i], engine_command);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int t_count = static_cast<int>(
      std::min(static_cast<std::size_t>(jobs), paths.size()));
  if (t_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < t_count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

}  // namespace sdt
