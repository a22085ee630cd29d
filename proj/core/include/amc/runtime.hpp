#pragma once

namespace amc {

/// Keeps large activation buffers on the heap between batches instead of
/// returning them to the OS after every free. No-op outside glibc.
void tune_allocator();

}  // namespace amc
