#include "sgcl/instrument.hpp"

#include <map>
#include <mutex>

namespace sgcl::instrument {

namespace {
std::mutex g_mutex;
std::map<std::string, long> g_encoder_forwards;
long g_head_applications = 0;
}  // namespace

void reset() {
  std::lock_guard lock(g_mutex);
  g_encoder_forwards.clear();
  g_head_applications = 0;
}

long encoder_forwards(const std::string& role) {
  std::lock_guard lock(g_mutex);
  auto it = g_encoder_forwards.find(role);
  return it == g_encoder_forwards.end() ? 0 : it->second;
}

long head_applications() {
  std::lock_guard lock(g_mutex);
  return g_head_applications;
}

void count_encoder_forwards(const std::string& role, long sentences) {
  std::lock_guard lock(g_mutex);
  g_encoder_forwards[role] += sentences;
}

void count_head_application() {
  std::lock_guard lock(g_mutex);
  ++g_head_applications;
}

}  // namespace sgcl::instrument
