#include "rieszlab/parallel.hpp"

namespace rieszlab {

int& thread_count() {
  static int count = static_cast<int>(std::thread::hardware_concurrency());
  return count;
}

}  // namespace rieszlab
