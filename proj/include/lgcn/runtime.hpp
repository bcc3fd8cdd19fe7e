#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace lgcn {

/// Keeps large matrix buffers on the heap instead of returning them to the OS
/// after every epoch. Training allocates and frees the same N x N buffers each
/// step; with glibc's defaults every one of them is a fresh mmap.
inline void configure_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace lgcn
