// Writes the tabulated band dye used by the cutoff-scan configs.
#include <fstream>
#include <iostream>

#include "dyecav/dye_model.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_band_dye <output.csv>\n";
        return 2;
    }
    std::ofstream out(argv[1]);
    if (!out) {
        std::cerr << "cannot write " << argv[1] << '\n';
        return 1;
    }
    dyecav::write_spectra_csv(out, dyecav::make_band_dye_table());
    return 0;
}
