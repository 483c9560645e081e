#pragma once

#include <string>
#include <vector>

namespace pipe {

std::string read_text_file(const std::string& path);

// Writes to "<path>.tmp" then renames, so an interrupted run never leaves a
// truncated file at the final path.
void write_text_file_atomic(const std::string& path, const std::string& content);

// "HH:MM" or "HH:MM:SS" to minutes since midnight.
double parse_clock_minutes(const std::string& text);

std::vector<std::string> split(const std::string& s, char sep);

// Path of `relative` interpreted against the directory of `anchor_file`.
std::string sibling_path(const std::string& anchor_file, const std::string& relative);

}  // namespace pipe
