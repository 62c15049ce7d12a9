#pragma once

#include <string>

namespace sgcl::instrument {

/// Process-wide counters for verifying which components a code path touched.
/// encode() bumps the per-role forward counter (one count per sentence);
/// project() bumps the head counter. Test-facing.

void reset();
long encoder_forwards(const std::string& role);
long head_applications();

void count_encoder_forwards(const std::string& role, long sentences);
void count_head_application();

}  // namespace sgcl::instrument
