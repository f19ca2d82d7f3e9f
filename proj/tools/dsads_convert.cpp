// Converts the raw DSADS folder tree into the CSV ingestion format.
#include <iostream>

#include "CLI11.hpp"

#include "xsadapt/dsads.hpp"
#include "xsadapt/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Convert DSADS (aNN/pM/sKK.txt) into xsadapt CSV"};
    std::string root, out;
    double rate = 100.0;
    bool all_columns = false;
    app.add_option("root", root, "DSADS data directory")->required();
    app.add_option("out", out, "output CSV")->required();
    app.add_option("--rate", rate, "target sample rate in Hz (<= 0 keeps 25 Hz)")->capture_default_str();
    app.add_flag("--all-columns", all_columns, "keep all 45 columns instead of acc+gyro (30)");
    CLI11_PARSE(app, argc, argv);
    try {
        const auto recs = xsa::load_dsads(root, xsa::dsads_default_activities(), rate,
                                         all_columns ? xsa::DsadsLayout::all : xsa::DsadsLayout::acc_gyro);
        xsa::write_csv(out, recs);
        std::cout << "wrote " << recs.size() << " subjects, " << xsa::dsads_default_activities().size()
                  << " classes, " << recs.front().channel_count() << " channels to " << out << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
