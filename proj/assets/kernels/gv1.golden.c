void test(Bdyn, p, B_p) {
    config_ex(WEIGHT_STATIONARY, NO_ACTIVATION, true, false);
    config_st(1 * sizeof(float)); // B_p has 1 column in DRAM
    config_ld(4 * sizeof(float), 0); // Bdyn is stored 12x4
    config_ld(1 * sizeof(float), 1); // p has 1 column in DRAM
    static uint32_t Bdyn_sp_addr = 0; // 12 rows, 0 to 11
    static uint32_t p_sp_addr = 12; // 12 rows, 12 to 23
    static uint32_t B_p_acc_addr = 1 << 31; // 4 rows, 0 to 3
    mvin(Bdyn, Bdyn_sp_addr, 4, 4); // rows 0-3 of Bdyn, transposed by config_ex
    mvin2(p + 0x0, p_sp_addr, 1, 4);
    preload(p_sp_addr, B_p_acc_addr, 1, 4, 1, 4);
    compute_preloaded(Bdyn_sp_addr, 0xffffffff, 4, 4, 1, 4);
    mvin(Bdyn + 16, Bdyn_sp_addr + 4, 4, 4); // rows 4-7
    mvin2(p + 0x4, p_sp_addr + 4, 1, 4);
    preload(p_sp_addr + 4, B_p_acc_addr | 1 << 30, 1, 4, 1, 4);
    compute_preloaded(Bdyn_sp_addr + 4, 0xffffffff, 4, 4, 1, 4);
    mvin(Bdyn + 32, Bdyn_sp_addr + 8, 4, 4); // rows 8-11
    mvin2(p + 0x8, p_sp_addr + 8, 1, 4);
    preload(p_sp_addr + 8, B_p_acc_addr | 1 << 30, 1, 4, 1, 4);
    compute_preloaded(Bdyn_sp_addr + 8, 0xffffffff, 4, 4, 1, 4);
    mvout(B_p, B_p_acc_addr, 1, 4);
    fence();
}
