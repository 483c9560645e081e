#include "pipe/io_util.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "pipe/common.hpp"

namespace pipe {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw data_error("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw data_error("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

double parse_clock_minutes(const std::string& text) {
  int h = 0, m = 0, s = 0;
  const int got = std::sscanf(text.c_str(), "%d:%d:%d", &h, &m, &s);
  if (got < 2 || h < 0 || h > 47 || m < 0 || m > 59 || s < 0 || s > 59) {
    throw data_error("malformed clock time '" + text + "' (expected HH:MM[:SS])");
  }
  return h * 60.0 + m + s / 60.0;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string sibling_path(const std::string& anchor_file, const std::string& relative) {
  if (!relative.empty() && relative.front() == '/') return relative;
  const auto slash = anchor_file.find_last_of('/');
  if (slash == std::string::npos) return relative;
  return anchor_file.substr(0, slash + 1) + relative;
}

}  // namespace pipe
